#include "cgt/baselines.hpp"
#include "cgt/error.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace cgt;
using cgt::test::random_tensor;

namespace {

struct Fixture {
    GraphSpec graph;
    Model model;
    std::vector<FlowWindow> windows;
    NormStats stats{{0.0}, {1.0}};
};

Fixture make_fixture(std::size_t n, const std::vector<Edge>& edges, std::uint64_t seed = 31) {
    Rng rng(seed);
    GraphOptions opts;
    opts.semantic_k = 0;
    GraphSpec g = build_graph(n, edges, std::vector<double>(edges.size(), 1.0), random_tensor({40, n, 1}, rng), opts);
    ModelConfig mc;
    mc.nodes = n;
    mc.window = 4;
    mc.hidden = 8;
    mc.seed = seed;
    std::vector<FlowWindow> w;
    for (int k = 0; k < 2; ++k) w.push_back({random_tensor({4, n, 1}, rng), random_tensor({4, n, 1}, rng), 0});
    return {std::move(g), Model(mc), std::move(w)};
}

std::vector<Edge> complete(std::size_t n) {
    std::vector<Edge> e;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) e.push_back({i, j, 1.0});
    }
    return e;
}

ExplainerConfig config_with(double tau, std::uint64_t seed = 1) {
    ExplainerConfig c;
    c.validity_epsilon = tau;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("baseline kind names") {
    CHECK(parse_baseline_kind("one-hop") == BaselineKind::one_hop);
    CHECK(parse_baseline_kind(to_string(BaselineKind::attention_score)) == BaselineKind::attention_score);
    CHECK_THROWS_AS(parse_baseline_kind("gat"), ConfigError);
}

TEST_CASE("random explainer") {
    const Fixture f = make_fixture(6, complete(6));
    SUBCASE("removes about half of the maskable edges") {
        std::size_t removed = 0, total = 0;
        for (std::uint64_t seed = 1; seed <= 600; ++seed) {
            const auto r = random_explain(f.model, f.graph, f.windows, f.stats, config_with(1e-3, seed));
            removed += r.delta_a.size();
            total += 15;
        }
        CHECK(std::abs(static_cast<double>(removed) / static_cast<double>(total) - 0.5) < 0.02);
    }
    SUBCASE("reproducible per seed") {
        const auto a = random_explain(f.model, f.graph, f.windows, f.stats, config_with(1e-3, 9));
        const auto b = random_explain(f.model, f.graph, f.windows, f.stats, config_with(1e-3, 9));
        CHECK(to_json(a).dump() == to_json(b).dump());
        CHECK(a.explainer == "random");
    }
    SUBCASE("empty graph gives D = 0") {
        const Fixture e = make_fixture(4, {});
        const auto r = random_explain(e.model, e.graph, e.windows, e.stats, config_with(1e-3));
        CHECK(r.best_distance == 0.0);
        CHECK(r.size() == 0);
        CHECK(!r.valid);
    }
}

TEST_CASE("one-hop explainer") {
    // Node 4 is isolated, node 1 has degree 3, node 0 has degree 1.
    const Fixture f = make_fixture(5, {{0, 1, 1.0}, {1, 2, 1.0}, {1, 3, 1.0}, {2, 3, 1.0}});
    SUBCASE("isolated center is invalid") {
        const auto r = one_hop_explain(f.model, f.graph, f.windows, f.stats, config_with(1e-6), 4);
        CHECK(!r.valid);
        CHECK(r.size() == 0);
        CHECK(!r.warnings.empty());
    }
    SUBCASE("degree-1 center removes its single edge when that is enough") {
        const auto r = one_hop_explain(f.model, f.graph, f.windows, f.stats, config_with(1e-9), 0);
        REQUIRE(r.valid);
        REQUIRE(r.delta_a.size() == 1);
        CHECK(r.delta_a[0].i == 0);
        CHECK(r.delta_a[0].j == 1);
    }
    SUBCASE("center outside the graph") {
        CHECK_THROWS_AS(one_hop_explain(f.model, f.graph, f.windows, f.stats, config_with(1e-6), 9), ConfigError);
    }
    SUBCASE("minimal against brute force over all incident subsets") {
        CandidateEvaluator eval(f.model, f.graph, f.windows, f.stats);
        const double full = eval.spatial(spatial_from_pairs(5, {{0, 1}, {1, 2}, {1, 3}})).mae_change;
        for (double frac : {0.2, 0.5, 0.9}) {
            const double tau = frac * full;
            const std::vector<NodePair> incident = {{0, 1}, {1, 2}, {1, 3}};
            std::size_t best = 99;
            for (unsigned bits = 1; bits < 8; ++bits) {
                std::vector<NodePair> sub;
                for (unsigned b = 0; b < 3; ++b) {
                    if (bits & (1u << b)) sub.push_back(incident[b]);
                }
                if (eval.spatial(spatial_from_pairs(5, sub)).mae_change >= tau) best = std::min(best, sub.size());
            }
            const auto r = one_hop_explain(f.model, f.graph, f.windows, f.stats, config_with(tau), 1);
            REQUIRE(r.valid);
            CHECK(r.size() == best);
        }
    }
}

TEST_CASE("attention-score explainer") {
    const Fixture f = make_fixture(5, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 4, 1.0}, {0, 4, 1.0}});
    SUBCASE("scores match a loop over the recorded attention maps") {
        const auto scores = attention_edge_scores(f.model, f.graph, f.windows);
        std::vector<double> sum(25, 0.0);
        double maps = 0.0;
        for (const auto& w : f.windows) {
            AttentionTrace trace;
            ForwardOptions opts;
            opts.trace = &trace;
            forward(f.model, f.graph, w.x, opts);
            for (const auto& m : trace.maps) {
                for (std::size_t s = 0; s < m.dim(0); ++s) {
                    for (std::size_t i = 0; i < 5; ++i) {
                        for (std::size_t j = 0; j < 5; ++j) sum[i * 5 + j] += m.at({s, i, j});
                    }
                    maps += 1.0;
                }
            }
        }
        REQUIRE(scores.size() == 5);
        for (const auto& e : scores) {
            CHECK(e.score == doctest::Approx(0.5 * (sum[e.i * 5 + e.j] + sum[e.j * 5 + e.i]) / maps).epsilon(1e-12));
        }
        for (std::size_t k = 1; k < scores.size(); ++k) CHECK(scores[k - 1].score >= scores[k].score);
    }
    SUBCASE("uniform attention ties break by (i, j)") {
        Model flat = f.model.clone();
        for (auto& b : flat.params().blocks) {
            for (auto* p : {&b.geo, &b.sem}) {
                for (double& v : p->w_q.data_mut()) v = 0.0;
            }
        }
        // Zero queries make every logit zero; every node has degree 2 on the ring.
        const auto scores = attention_edge_scores(flat, f.graph, f.windows);
        const std::vector<NodePair> expected = {{0, 1}, {0, 4}, {1, 2}, {2, 3}, {3, 4}};
        for (std::size_t k = 0; k < scores.size(); ++k) {
            CHECK(NodePair{scores[k].i, scores[k].j} == expected[k]);
        }
    }
    SUBCASE("top_k 0 is the identity") {
        const auto r = attention_explain(f.model, f.graph, f.windows, f.stats, config_with(1e-6), 0);
        CHECK(r.best_distance == 0.0);
        CHECK(r.mask.zeros() == 0);
        CHECK(r.params["ranking"].size() == 5);
    }
    SUBCASE("top_k above the edge count is clamped with a warning") {
        const auto r = attention_explain(f.model, f.graph, f.windows, f.stats, config_with(1e-6), 50);
        CHECK(r.size() == 5);
        CHECK(r.params["top_k"] == 5);
        CHECK(!r.warnings.empty());
    }
    SUBCASE("removes the top-ranked edges") {
        const auto scores = attention_edge_scores(f.model, f.graph, f.windows);
        const auto r = attention_explain(f.model, f.graph, f.windows, f.stats, config_with(1e-6), 2);
        REQUIRE(r.size() == 2);
        const auto removed = removed_pairs(r.mask);
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(std::find(removed.begin(), removed.end(), NodePair{scores[k].i, scores[k].j}) != removed.end());
        }
    }
}
