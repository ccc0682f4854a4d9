#include "cgt/baselines.hpp"

#include "cgt/error.hpp"
#include "cgt/rng.hpp"

#include <algorithm>

namespace cgt {

std::string to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::random: return "random";
        case BaselineKind::one_hop: return "one_hop";
        case BaselineKind::attention_score: return "attention_score";
    }
    return "unknown";
}

BaselineKind parse_baseline_kind(const std::string& s) {
    if (s == "random") return BaselineKind::random;
    if (s == "one_hop" || s == "one-hop") return BaselineKind::one_hop;
    if (s == "attention_score" || s == "attention") return BaselineKind::attention_score;
    throw ConfigError("unknown baseline '" + s + "' (expected random, one_hop or attention_score)");
}

namespace {

ExplainerConfig spatial_config(const ExplainerConfig& config) {
    ExplainerConfig cfg = config;
    cfg.dimension = Dimension::spatial;
    cfg.validate();
    return cfg;
}

}  // namespace

CounterfactualResult random_explain(const Model& model, const GraphSpec& graph, const std::vector<FlowWindow>& windows,
                                    const NormStats& stats, const ExplainerConfig& config) {
    const ExplainerConfig cfg = spatial_config(config);
    CandidateEvaluator eval(model, graph, windows, stats, cfg.targets);
    CounterfactualResult result = new_result(eval, cfg, to_string(BaselineKind::random));
    SpatialMask mask(graph);
    Rng rng(cfg.seed);
    std::vector<double> logits(mask.pairs().size());
    for (double& v : logits) v = rng.uniform(-1.0, 1.0);
    mask.set_pair_logits(logits);
    const BinaryMask candidate = threshold(mask, cfg.threshold);
    const auto score = eval.spatial(candidate);
    set_candidate(result, eval, candidate, score);
    result.valid = score.mae_change >= result.tau_v;
    return result;
}

namespace {

struct Found {
    BinaryMask mask;
    CandidateEvaluator::Score score;
    std::size_t size = 0;
};

bool better(const Found& a, const std::optional<Found>& b) {
    if (!b) return true;
    if (a.size != b->size) return a.size < b->size;
    return a.score.mae_change > b->score.mae_change;
}

std::optional<Found> search_center(const CandidateEvaluator& eval, std::size_t center, double tau_v) {
    const std::size_t n = eval.graph().n_nodes;
    std::vector<NodePair> incident;
    for (const auto& p : structural_pairs(eval.graph())) {
        if (p.first == center || p.second == center) incident.push_back(p);
    }
    const std::size_t d = incident.size();
    if (d == 0) return std::nullopt;

    auto evaluate = [&](const std::vector<NodePair>& removed) {
        BinaryMask m = spatial_from_pairs(n, removed);
        m.threshold = 0.5;
        auto s = eval.spatial(m);
        return Found{std::move(m), s, removed.size()};
    };

    if (d <= kOneHopExhaustiveDegree) {
        // Subsets in increasing size; combinations in lexicographic order.
        for (std::size_t k = 1; k <= d; ++k) {
            std::optional<Found> best;
            std::vector<std::size_t> idx(k);
            for (std::size_t i = 0; i < k; ++i) idx[i] = i;
            while (true) {
                std::vector<NodePair> removed;
                for (std::size_t i : idx) removed.push_back(incident[i]);
                Found f = evaluate(removed);
                if (f.score.mae_change >= tau_v && better(f, best)) best = std::move(f);
                // next combination
                std::size_t pos = k;
                while (pos > 0 && idx[pos - 1] == d - k + pos - 1) --pos;
                if (pos == 0) break;
                ++idx[pos - 1];
                for (std::size_t i = pos; i < k; ++i) idx[i] = idx[i - 1] + 1;
            }
            if (best) return best;
        }
        return std::nullopt;
    }

    // Greedy: add the edge with the largest resulting prediction change.
    std::vector<NodePair> removed;
    std::vector<bool> used(d, false);
    for (std::size_t step = 0; step < d; ++step) {
        std::optional<Found> pick;
        std::size_t pick_index = 0;
        for (std::size_t e = 0; e < d; ++e) {
            if (used[e]) continue;
            auto trial = removed;
            trial.push_back(incident[e]);
            Found f = evaluate(trial);
            if (!pick || f.score.mae_change > pick->score.mae_change) {
                pick = std::move(f);
                pick_index = e;
            }
        }
        used[pick_index] = true;
        removed.push_back(incident[pick_index]);
        if (pick->score.mae_change >= tau_v) return pick;
    }
    return std::nullopt;
}

}  // namespace

CounterfactualResult one_hop_explain(const Model& model, const GraphSpec& graph,
                                     const std::vector<FlowWindow>& windows, const NormStats& stats,
                                     const ExplainerConfig& config, std::optional<std::size_t> center) {
    const ExplainerConfig cfg = spatial_config(config);
    if (center && *center >= graph.n_nodes) {
        throw ConfigError("one_hop: center " + std::to_string(*center) + " outside the graph");
    }
    CandidateEvaluator eval(model, graph, windows, stats, cfg.targets);
    CounterfactualResult result = new_result(eval, cfg, to_string(BaselineKind::one_hop));

    std::optional<Found> best;
    std::size_t best_center = 0;
    std::vector<std::size_t> centers;
    if (center) {
        centers.push_back(*center);
    } else {
        for (std::size_t i = 0; i < graph.n_nodes; ++i) centers.push_back(i);
    }
    for (std::size_t c : centers) {
        auto f = search_center(eval, c, result.tau_v);
        if (f && better(*f, best)) {
            best = std::move(f);
            best_center = c;
        }
    }
    if (center) result.params["center"] = *center;
    if (best) {
        set_candidate(result, eval, best->mask, best->score);
        result.valid = true;
        result.params["chosen_center"] = best_center;
    } else {
        result.warnings.push_back(center ? "no valid subset around center " + std::to_string(*center)
                                         : "no valid one-hop subset around any node");
    }
    return result;
}

std::vector<EdgeScore> attention_edge_scores(const Model& model, const GraphSpec& graph,
                                             const std::vector<FlowWindow>& windows) {
    NoGradGuard no_grad;
    const std::size_t n = graph.n_nodes;
    std::vector<double> total(n * n, 0.0);
    std::size_t maps = 0;
    for (const auto& w : windows) {
        AttentionTrace trace;
        ForwardOptions opts;
        opts.trace = &trace;
        forward(model, graph, w.x, opts);
        for (const auto& m : trace.maps) {
            const auto v = m.data();
            const std::size_t slices = m.dim(0);
            for (std::size_t s = 0; s < slices; ++s) {
                for (std::size_t k = 0; k < n * n; ++k) total[k] += v[s * n * n + k];
            }
            maps += slices;
        }
    }
    std::vector<EdgeScore> out;
    for (const auto& [i, j] : structural_pairs(graph)) {
        const double s = maps == 0 ? 0.0 : 0.5 * (total[i * n + j] + total[j * n + i]) / static_cast<double>(maps);
        out.push_back({i, j, s});
    }
    std::stable_sort(out.begin(), out.end(), [](const EdgeScore& a, const EdgeScore& b) {
        if (a.score != b.score) return a.score > b.score;
        return std::make_pair(a.i, a.j) < std::make_pair(b.i, b.j);
    });
    return out;
}

CounterfactualResult attention_explain(const Model& model, const GraphSpec& graph,
                                       const std::vector<FlowWindow>& windows, const NormStats& stats,
                                       const ExplainerConfig& config, std::size_t top_k) {
    const ExplainerConfig cfg = spatial_config(config);
    CandidateEvaluator eval(model, graph, windows, stats, cfg.targets);
    CounterfactualResult result = new_result(eval, cfg, to_string(BaselineKind::attention_score));
    const auto ranking = attention_edge_scores(eval.model(), graph, windows);
    if (top_k > ranking.size()) {
        result.warnings.push_back("top_k " + std::to_string(top_k) + " clamped to " + std::to_string(ranking.size()) +
                                  " structural edges");
        top_k = ranking.size();
    }
    nlohmann::json rank = nlohmann::json::array();
    for (const auto& e : ranking) rank.push_back({{"i", e.i}, {"j", e.j}, {"score", e.score}});
    result.params["top_k"] = top_k;
    result.params["ranking"] = rank;

    std::vector<NodePair> removed;
    for (std::size_t k = 0; k < top_k; ++k) removed.emplace_back(ranking[k].i, ranking[k].j);
    BinaryMask candidate = spatial_from_pairs(graph.n_nodes, removed);
    candidate.threshold = cfg.threshold;
    const auto score = eval.spatial(candidate);
    set_candidate(result, eval, candidate, score);
    result.valid = score.mae_change >= result.tau_v;
    return result;
}

}  // namespace cgt
