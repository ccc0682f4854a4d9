#include "cgt/data.hpp"
#include "cgt/error.hpp"
#include "cgt/explainer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace cgt;
using cgt::test::values;

namespace {

struct Setup {
    DatasetBundle bundle;
    Model model;
    std::vector<FlowWindow> windows;
};

Setup small_setup(std::size_t window = 12) {
    SyntheticSpec s;
    s.n_nodes = 5;
    s.series_length = 200;
    s.window = window;
    s.planted_edges = {{0, 1}};
    s.seed = 21;
    DatasetBundle b = generate(s);
    ModelConfig mc;
    mc.nodes = 5;
    mc.window = window;
    mc.hidden = 8;
    mc.seed = 21;
    Model m(mc);
    auto w = sample_windows(b.test, 2, 21);
    return {std::move(b), std::move(m), std::move(w)};
}

ExplainerConfig quick(double beta, std::size_t iterations = 20) {
    ExplainerConfig c;
    c.beta = beta;
    c.iterations = iterations;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("config validation and enum parsing") {
    ExplainerConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.beta = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.threshold = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.iterations = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.targets = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(parse_beta_mode("relative") == BetaMode::relative);
    CHECK(parse_dimension(to_string(Dimension::temporal)) == Dimension::temporal);
    CHECK_THROWS_AS(parse_beta_mode("other"), ConfigError);
}

TEST_CASE("prediction loss") {
    const Setup s = small_setup();
    const Tensor& x = s.windows.front().x;
    SUBCASE("identity mask gives exactly zero") {
        ForwardOptions id;
        id.mask_s = Tensor::ones({5, 5});
        CHECK(loss_pred(s.model, s.bundle.graph, x, id).item() == 0.0);
    }
    SUBCASE("any mask gives a non-positive loss equal to minus the loop MSE") {
        ForwardOptions masked;
        masked.mask_s = spatial_from_pairs(5, {{0, 1}}).tensor();
        masked.mask_f = temporal_from_slices(12, {11}).tensor();
        const double got = loss_pred(s.model, s.bundle.graph, x, masked).item();
        const auto ref = values(forward(s.model, s.bundle.graph, x));
        const auto per = values(forward(s.model, s.bundle.graph, x, masked));
        double acc = 0.0;
        for (std::size_t k = 0; k < ref.size(); ++k) acc += (ref[k] - per[k]) * (ref[k] - per[k]);
        CHECK(got <= 0.0);
        CHECK(got == doctest::Approx(-acc / static_cast<double>(ref.size())).epsilon(1e-12));
        const double flow = loss_pred(s.model, s.bundle.graph, x, masked, &s.bundle.stats).item();
        const double sd = s.bundle.stats.std[0];
        CHECK(flow == doctest::Approx(got * sd * sd).epsilon(1e-12));
    }
}

TEST_CASE("distance loss") {
    const Setup s = small_setup();
    const auto pairs = structural_pairs(s.bundle.graph);
    REQUIRE(!pairs.empty());
    const BinaryMask one = spatial_from_pairs(5, {pairs.front()});
    CHECK(loss_dist(s.bundle.graph, &one, nullptr) == 2.0);
    const BinaryMask slices = temporal_from_slices(12, {0, 3});
    CHECK(loss_dist(s.bundle.graph, &one, &slices) == 4.0);
    CHECK(loss_dist(s.bundle.graph, nullptr, nullptr) == 0.0);
    // A non-structural pair does not count.
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = i + 1; j < 5; ++j) {
            if (std::find(pairs.begin(), pairs.end(), NodePair{i, j}) != pairs.end()) continue;
            const BinaryMask off = spatial_from_pairs(5, {{i, j}});
            CHECK(loss_dist(s.bundle.graph, &off, nullptr) == 0.0);
        }
    }
    // Relaxed value at init 0.5 is half of every structural entry.
    const SpatialMask half(s.bundle.graph, 0.5);
    CHECK(spatial_distance_relaxed(half).item() == doctest::Approx(static_cast<double>(pairs.size())));
}

TEST_CASE("validity predicate") {
    const Tensor y_hat({2}, std::vector<double>{1.0, 2.0});
    const Tensor y_bar({2}, std::vector<double>{1.5, 2.5});
    CHECK(is_valid_counterfactual(y_hat, y_bar, 0.5));
    CHECK(!is_valid_counterfactual(y_hat, y_bar, 0.6));
    CHECK(!is_valid_counterfactual(y_hat, y_hat, 1e-9));
    CHECK_THROWS_AS(is_valid_counterfactual(y_hat, y_bar, 0.0), ContractError);
    CHECK_THROWS_AS(is_valid_counterfactual(y_hat, y_bar, -1.0), ContractError);
    CHECK_THROWS_AS(is_valid_counterfactual(y_hat, Tensor({3}), 0.1), DimensionError);
    // Valid at tau implies valid at every smaller tau.
    bool previous = true;
    for (double tau = 0.05; tau < 1.0; tau += 0.05) {
        const bool v = is_valid_counterfactual(y_hat, y_bar, tau);
        CHECK((previous || !v));
        previous = v;
    }
}

TEST_CASE("search contracts") {
    const Setup s = small_setup();
    const Model before = s.model.clone();

    SUBCASE("huge beta keeps the identity and reports an invalid result") {
        const auto r = search_spatial(s.model, s.bundle.graph, s.windows, s.bundle.stats, quick(1e6));
        CHECK(!r.valid);
        CHECK(r.size() == 0);
        CHECK(r.mask.zeros() == 0);
        CHECK(!r.warnings.empty());
    }
    SUBCASE("trace has one record per iteration and the best distance never grows") {
        const auto r = search_spatial(s.model, s.bundle.graph, s.windows, s.bundle.stats, quick(0.0, 40));
        CHECK(r.trace.size() == 40);
        CHECK(r.valid);
        std::optional<double> last;
        for (const auto& t : r.trace) {
            if (last) {
                REQUIRE(t.best_distance.has_value());
                CHECK(*t.best_distance <= *last);
            }
            if (t.best_distance) last = t.best_distance;
        }
        CHECK(r.best_distance == 2.0 * static_cast<double>(r.delta_a.size()));
        CHECK(r.mae_change >= r.tau_v);
    }
    SUBCASE("the model is never updated") {
        search_spatial(s.model, s.bundle.graph, s.windows, s.bundle.stats, quick(0.0));
        const auto a = before.parameters();
        const auto b = s.model.parameters();
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(values(a[i].tensor) == values(b[i].tensor));
    }
    SUBCASE("same seed, same result") {
        auto c = quick(0.0);
        c.jitter = 0.2;
        const auto r1 = search_spatial(s.model, s.bundle.graph, s.windows, s.bundle.stats, c);
        const auto r2 = search_spatial(s.model, s.bundle.graph, s.windows, s.bundle.stats, c);
        CHECK(to_json(r1).dump() == to_json(r2).dump());
    }
    SUBCASE("JSON round trip") {
        const auto r = search_spatial(s.model, s.bundle.graph, s.windows, s.bundle.stats, quick(0.0));
        const auto back = result_from_json(to_json(r));
        CHECK(to_json(back).dump() == to_json(r).dump());
        CHECK(back.size() == r.size());
        nlohmann::json bad = to_json(r);
        bad["schema"] = "other/9";
        CHECK_THROWS_AS(result_from_json(bad), ConfigError);
    }
    SUBCASE("counterfactual input applies the stored mask") {
        const auto r = search_spatial(s.model, s.bundle.graph, s.windows, s.bundle.stats, quick(0.0));
        const auto p = counterfactual_input(r, s.bundle.graph, s.windows.front().x);
        for (const auto& e : r.delta_a) CHECK(p.graph.a_gcn.data()[e.i * 5 + e.j] == 0.0);
    }
    SUBCASE("no windows is a contract error") {
        CHECK_THROWS_AS(search_spatial(s.model, s.bundle.graph, {}, s.bundle.stats, quick(0.0)), ContractError);
    }
}

TEST_CASE("temporal search on a single-step window") {
    const Setup s = small_setup(1);
    auto c = quick(0.0, 10);
    c.dimension = Dimension::temporal;
    const auto r = search(s.model, s.bundle.graph, s.windows, s.bundle.stats, c);
    CHECK(r.dimension == Dimension::temporal);
    CHECK(r.mask.shape == Shape{1});
    CHECK(r.trace.size() == 10);
    if (r.valid) CHECK(r.delta_x == std::vector<std::size_t>{0});
}
