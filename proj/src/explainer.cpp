#include "cgt/explainer.hpp"

#include "cgt/error.hpp"
#include "cgt/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace cgt {

std::string to_string(Dimension d) { return d == Dimension::spatial ? "spatial" : "temporal"; }

Dimension parse_dimension(const std::string& s) {
    if (s == "spatial") return Dimension::spatial;
    if (s == "temporal") return Dimension::temporal;
    throw ConfigError("unknown dimension '" + s + "' (expected spatial or temporal)");
}

std::string to_string(BetaMode m) { return m == BetaMode::absolute ? "absolute" : "relative"; }

BetaMode parse_beta_mode(const std::string& s) {
    if (s == "absolute") return BetaMode::absolute;
    if (s == "relative") return BetaMode::relative;
    throw ConfigError("unknown beta mode '" + s + "' (expected absolute or relative)");
}

void ExplainerConfig::validate() const {
    if (!(beta >= 0.0)) throw ConfigError("explainer: beta must be >= 0");
    if (!(alpha > 0.0)) throw ConfigError("explainer: alpha must be > 0");
    if (iterations < 1) throw ConfigError("explainer: iterations must be >= 1");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("explainer: threshold must lie in (0, 1)");
    if (validity_epsilon < 0.0) throw ConfigError("explainer: validity epsilon must be >= 0");
    if (validity_epsilon == 0.0 && !(validity_fraction > 0.0)) {
        throw ConfigError("explainer: validity fraction must be > 0");
    }
    if (!(init > 0.0 && init < 1.0)) throw ConfigError("explainer: init must lie in (0, 1)");
    if (jitter < 0.0) throw ConfigError("explainer: jitter must be >= 0");
    if ((targets & mask_all) == 0) throw ConfigError("explainer: no mask target selected");
}

namespace {

// Mean absolute difference in flow units; channel c is scaled by std[c].
double mae_flow(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const NormStats& stats) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t w = 0; w < a.size(); ++w) {
        const auto av = a[w].data();
        const auto bv = b[w].data();
        const std::size_t c = a[w].dim(2);
        for (std::size_t k = 0; k < av.size(); ++k) total += std::abs(av[k] - bv[k]) * stats.std[k % c];
        count += av.size();
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double mse_flow(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const NormStats& stats) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t w = 0; w < a.size(); ++w) {
        const auto av = a[w].data();
        const auto bv = b[w].data();
        const std::size_t c = a[w].dim(2);
        for (std::size_t k = 0; k < av.size(); ++k) {
            const double diff = (av[k] - bv[k]) * stats.std[k % c];
            total += diff * diff;
        }
        count += av.size();
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

Tensor std_tensor(const NormStats& stats) {
    return Tensor(Shape{1, 1, stats.std.size()}, stats.std);
}

}  // namespace

Tensor mse_flow(const Tensor& a, const Tensor& b, const NormStats& stats) {
    Tensor s = std_tensor(stats);
    return mse(mul(a, s), mul(b, s));
}

namespace {

std::vector<Tensor> targets_of(const std::vector<FlowWindow>& windows) {
    std::vector<Tensor> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(w.y);
    return out;
}

}  // namespace

CandidateEvaluator::CandidateEvaluator(const Model& model, const GraphSpec& graph, std::vector<FlowWindow> windows,
                                       NormStats stats, unsigned targets)
    : model_(model.frozen()), graph_(graph), windows_(std::move(windows)), stats_(std::move(stats)),
      targets_(targets) {
    if (windows_.empty()) throw ContractError("explainer: no windows to explain");
    original_ = predict(model_, graph_, windows_);
    mae_original_ = mae_flow(original_, targets_of(windows_), stats_);
}

CandidateEvaluator::Score CandidateEvaluator::score(const ForwardOptions& options, double distance) const {
    const auto perturbed = predict(model_, graph_, windows_, options);
    Score s;
    s.loss_pred = -mse_flow(original_, perturbed, stats_);
    s.mae_change = mae_flow(perturbed, original_, stats_);
    s.mae_perturbed = mae_flow(perturbed, targets_of(windows_), stats_);
    s.distance = distance;
    return s;
}

CandidateEvaluator::Score CandidateEvaluator::spatial(const BinaryMask& mask) const {
    ForwardOptions opts;
    opts.mask_s = mask.tensor();
    opts.targets = targets_;
    return score(opts, spatial_distance(graph_, mask));
}

CandidateEvaluator::Score CandidateEvaluator::temporal(const BinaryMask& mask) const {
    ForwardOptions opts;
    opts.mask_f = mask.tensor();
    return score(opts, temporal_distance(mask));
}

void set_candidate(CounterfactualResult& result, const CandidateEvaluator& eval, const BinaryMask& mask,
                   const CandidateEvaluator::Score& score) {
    result.mask = mask;
    result.delta_a.clear();
    result.delta_x.clear();
    if (mask.source == MaskSource::spatial) {
        const std::size_t n = eval.graph().n_nodes;
        const auto a = eval.graph().a_gcn.data();
        for (const auto& [i, j] : removed_pairs(mask)) {
            result.delta_a.push_back({i, j, a[i * n + j]});
        }
    } else {
        result.delta_x = removed_slices(mask);
    }
    result.best_distance = score.distance;
    result.loss_pred = score.loss_pred;
    result.mae_change = score.mae_change;
    result.mae_perturbed = score.mae_perturbed;
}

Tensor loss_pred(const Model& model, const GraphSpec& graph, const Tensor& x, const ForwardOptions& masked,
                 const NormStats* stats) {
    Tensor reference;
    {
        NoGradGuard no_grad;
        reference = forward(model, graph, x);
    }
    Tensor perturbed = forward(model, graph, x, masked);
    return neg(stats ? mse_flow(reference, perturbed, *stats) : mse(reference, perturbed));
}

double loss_dist(const GraphSpec& graph, const BinaryMask* mask_s, const BinaryMask* mask_f) {
    double d = 0.0;
    if (mask_s) d += spatial_distance(graph, *mask_s);
    if (mask_f) d += temporal_distance(*mask_f);
    return d;
}

bool is_valid_counterfactual(const std::vector<Tensor>& y_hat, const std::vector<Tensor>& y_bar, double tau_v) {
    if (!(tau_v > 0.0)) throw ContractError("is_valid_counterfactual: tau_v must be positive");
    if (y_hat.size() != y_bar.size()) throw DimensionError("is_valid_counterfactual: window count mismatch");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t w = 0; w < y_hat.size(); ++w) {
        if (y_hat[w].shape() != y_bar[w].shape()) {
            throw DimensionError("is_valid_counterfactual: " + shape_str(y_hat[w].shape()) + " vs " +
                                 shape_str(y_bar[w].shape()));
        }
        const auto a = y_hat[w].data();
        const auto b = y_bar[w].data();
        for (std::size_t k = 0; k < a.size(); ++k) total += std::abs(a[k] - b[k]);
        count += a.size();
    }
    const double mae = count == 0 ? 0.0 : total / static_cast<double>(count);
    return mae >= tau_v;
}

bool is_valid_counterfactual(const Tensor& y_hat, const Tensor& y_bar, double tau_v) {
    return is_valid_counterfactual(std::vector<Tensor>{y_hat}, std::vector<Tensor>{y_bar}, tau_v);
}

CounterfactualResult new_result(const CandidateEvaluator& eval, const ExplainerConfig& config, std::string explainer) {
    CounterfactualResult r;
    r.explainer = std::move(explainer);
    r.dimension = config.dimension;
    r.threshold = config.threshold;
    r.seed = config.seed;
    r.structural_edges = structural_pairs(eval.graph()).size();
    r.windows = eval.windows().size();
    r.mae_original = eval.mae_original();
    r.mae_perturbed = eval.mae_original();
    r.tau_v = validity_threshold(config, eval);
    r.mask = config.dimension == Dimension::spatial ? identity_spatial(eval.graph().n_nodes)
                                                    : identity_temporal(eval.model().config().window);
    r.mask.threshold = config.threshold;
    r.params = {{"targets", config.targets}};
    return r;
}

double validity_threshold(const ExplainerConfig& config, const CandidateEvaluator& eval) {
    if (config.validity_epsilon > 0.0) return config.validity_epsilon;
    const double tau = config.validity_fraction * eval.mae_original();
    // A perfect model leaves no relative scale; fall back to a tiny absolute floor.
    return tau > 0.0 ? tau : 1e-9;
}

namespace {

// Shared loop. `relaxed` builds the continuous masks into the options and
// returns L_dist; `binarize` thresholds the logits.
template <class Mask, class Relax, class Binarize, class Score>
CounterfactualResult run_search(const CandidateEvaluator& eval, const ExplainerConfig& config, Mask& mask,
                                Relax relaxed, Binarize binarize, Score score_of, const BinaryMask& all_removed) {
    CounterfactualResult result = new_result(eval, config, "cgt");
    result.params.update({{"beta", config.beta},
                     {"beta_mode", to_string(config.beta_mode)},
                     {"alpha", config.alpha},
                     {"iterations", config.iterations},
                     {"init", config.init},
                     {"jitter", config.jitter},
                     {"targets", config.targets}});

    double beta = config.beta;
    if (config.beta_mode == BetaMode::relative) beta *= std::abs(score_of(all_removed).loss_pred);
    result.params["beta_effective"] = beta;
    result.trace.reserve(config.iterations);

    std::optional<BinaryMask> previous;
    CandidateEvaluator::Score cached;
    bool have_best = false;
    const auto& windows = eval.windows();
    const auto& original = eval.original();
    const double inv_windows = 1.0 / static_cast<double>(windows.size());

    for (std::size_t k = 0; k < config.iterations; ++k) {
        BinaryMask candidate = binarize();
        if (!previous || previous->entries != candidate.entries) {
            cached = score_of(candidate);
            previous = candidate;
        }
        const bool valid = cached.mae_change >= result.tau_v;
        if (valid) {
            const bool better = !have_best || cached.distance < result.best_distance ||
                                (cached.distance == result.best_distance && cached.mae_change > result.mae_change);
            if (better) {
                set_candidate(result, eval, candidate, cached);
                have_best = true;
            }
        }

        ForwardOptions opts;
        opts.targets = eval.targets();
        Tensor dist = relaxed(opts);
        Tensor pred_loss;
        for (std::size_t w = 0; w < windows.size(); ++w) {
            Tensor term = mse_flow(original[w], forward(eval.model(), eval.graph(), windows[w].x, opts), eval.stats());
            pred_loss = pred_loss.defined() ? add(pred_loss, term) : term;
        }
        pred_loss = scale(pred_loss, -inv_windows);
        Tensor total = add(pred_loss, scale(dist, beta));
        mask.logits().zero_grad();
        backward(total);
        {
            const auto g = mask.logits().grad();
            auto v = mask.logits().data_mut();
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= config.alpha * g[i];
        }
        if (!all_finite(mask.logits())) {
            throw NumericalError("explainer: mask logits became non-finite at iteration " + std::to_string(k) +
                                 " (seed " + std::to_string(config.seed) + ")");
        }

        TraceRecord rec;
        rec.iteration = k;
        rec.loss_pred = pred_loss.item();
        rec.loss_dist = dist.item();
        rec.distance = cached.distance;
        rec.valid = valid;
        rec.mae_change = cached.mae_change;
        if (have_best) rec.best_distance = result.best_distance;
        result.trace.push_back(rec);
    }
    result.valid = have_best;
    if (!have_best) result.warnings.push_back("no valid counterfactual found");
    return result;
}

std::vector<std::size_t> all_slices(std::size_t t) {
    std::vector<std::size_t> out(t);
    for (std::size_t i = 0; i < t; ++i) out[i] = i;
    return out;
}

}  // namespace

CounterfactualResult search_spatial(const Model& model, const GraphSpec& graph, const std::vector<FlowWindow>& windows,
                                    const NormStats& stats, const ExplainerConfig& config) {
    ExplainerConfig cfg = config;
    cfg.dimension = Dimension::spatial;
    cfg.validate();
    CandidateEvaluator eval(model, graph, windows, stats, cfg.targets);
    SpatialMask mask(graph, cfg.init);
    mask.jitter(cfg.jitter, cfg.seed);
    return run_search(
        eval, cfg, mask,
        [&](ForwardOptions& opts) {
            opts.mask_s = materialize_spatial(mask);
            return spatial_distance_relaxed(mask);
        },
        [&] { return threshold(mask, cfg.threshold); }, [&](const BinaryMask& m) { return eval.spatial(m); },
        spatial_from_pairs(graph.n_nodes, mask.pairs()));
}

CounterfactualResult search_temporal(const Model& model, const GraphSpec& graph,
                                     const std::vector<FlowWindow>& windows, const NormStats& stats,
                                     const ExplainerConfig& config) {
    ExplainerConfig cfg = config;
    cfg.dimension = Dimension::temporal;
    cfg.validate();
    CandidateEvaluator eval(model, graph, windows, stats, cfg.targets);
    TemporalMask mask(model.config().window, cfg.init);
    mask.jitter(cfg.jitter, cfg.seed);
    return run_search(
        eval, cfg, mask,
        [&](ForwardOptions& opts) {
            opts.mask_f = materialize_temporal(mask);
            return temporal_distance_relaxed(mask);
        },
        [&] { return threshold(mask, cfg.threshold); }, [&](const BinaryMask& m) { return eval.temporal(m); },
        temporal_from_slices(mask.length(), all_slices(mask.length())));
}

CounterfactualResult search(const Model& model, const GraphSpec& graph, const std::vector<FlowWindow>& windows,
                            const NormStats& stats, const ExplainerConfig& config) {
    return config.dimension == Dimension::spatial ? search_spatial(model, graph, windows, stats, config)
                                                  : search_temporal(model, graph, windows, stats, config);
}

Perturbed counterfactual_input(const CounterfactualResult& result, const GraphSpec& graph, const Tensor& x) {
    if (result.dimension == Dimension::spatial) return apply(result.mask, std::nullopt, graph, x);
    return apply(std::nullopt, result.mask, graph, x);
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const CounterfactualResult& r) {
    using nlohmann::json;
    json edges = json::array();
    for (const auto& e : r.delta_a) edges.push_back({{"i", e.i}, {"j", e.j}, {"weight_before", e.weight_before}});
    json trace = json::array();
    for (const auto& t : r.trace) {
        trace.push_back({{"iteration", t.iteration},
                         {"loss_pred", t.loss_pred},
                         {"loss_dist", t.loss_dist},
                         {"D", t.distance},
                         {"valid", t.valid},
                         {"mae_change", t.mae_change},
                         {"best_D", t.best_distance ? json(*t.best_distance) : json(nullptr)}});
    }
    return {{"schema", "cgt.counterfactual/1"},
            {"explainer", r.explainer},
            {"dimension", to_string(r.dimension)},
            {"valid", r.valid},
            {"removed_edges", edges},
            {"removed_slices", r.delta_x},
            {"mask", {{"shape", r.mask.shape}, {"entries", r.mask.entries}}},
            {"best_distance", r.best_distance},
            {"size", r.size()},
            {"loss_pred", r.loss_pred},
            {"mae_original", r.mae_original},
            {"mae_perturbed", r.mae_perturbed},
            {"mae_change", r.mae_change},
            {"delta_mae", r.delta_mae()},
            {"tau_v", r.tau_v},
            {"threshold", r.threshold},
            {"seed", r.seed},
            {"structural_edges", r.structural_edges},
            {"windows", r.windows},
            {"params", r.params},
            {"warnings", r.warnings},
            {"trace", trace}};
}

CounterfactualResult result_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema").get<std::string>() != "cgt.counterfactual/1") {
            throw ConfigError("result JSON: unsupported schema " + j.at("schema").get<std::string>());
        }
        CounterfactualResult r;
        r.explainer = j.at("explainer").get<std::string>();
        r.dimension = parse_dimension(j.at("dimension").get<std::string>());
        r.valid = j.at("valid").get<bool>();
        for (const auto& e : j.at("removed_edges")) {
            r.delta_a.push_back({e.at("i").get<std::size_t>(), e.at("j").get<std::size_t>(),
                                 e.at("weight_before").get<double>()});
        }
        r.delta_x = j.at("removed_slices").get<std::vector<std::size_t>>();
        r.mask.source = r.dimension == Dimension::spatial ? MaskSource::spatial : MaskSource::temporal;
        r.mask.shape = j.at("mask").at("shape").get<Shape>();
        r.mask.entries = j.at("mask").at("entries").get<std::vector<double>>();
        r.best_distance = j.at("best_distance").get<double>();
        r.loss_pred = j.at("loss_pred").get<double>();
        r.mae_original = j.at("mae_original").get<double>();
        r.mae_perturbed = j.at("mae_perturbed").get<double>();
        r.mae_change = j.at("mae_change").get<double>();
        r.tau_v = j.at("tau_v").get<double>();
        r.threshold = j.at("threshold").get<double>();
        r.mask.threshold = r.threshold;
        r.seed = j.at("seed").get<std::uint64_t>();
        r.structural_edges = j.at("structural_edges").get<std::size_t>();
        r.windows = j.at("windows").get<std::size_t>();
        r.params = j.at("params");
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        for (const auto& t : j.at("trace")) {
            TraceRecord rec;
            rec.iteration = t.at("iteration").get<std::size_t>();
            rec.loss_pred = t.at("loss_pred").get<double>();
            rec.loss_dist = t.at("loss_dist").get<double>();
            rec.distance = t.at("D").get<double>();
            rec.valid = t.at("valid").get<bool>();
            rec.mae_change = t.at("mae_change").get<double>();
            if (!t.at("best_D").is_null()) rec.best_distance = t.at("best_D").get<double>();
            r.trace.push_back(rec);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("result JSON: ") + e.what());
    }
}

void write_result_json(const CounterfactualResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << to_json(result).dump(2) << '\n';
}

CounterfactualResult read_result_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return result_from_json(j);
}

void write_trace_csv(const CounterfactualResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << "iteration,loss_pred,loss_dist,D,valid\n";
    out << std::setprecision(17);
    for (const auto& t : result.trace) {
        out << t.iteration << ',' << t.loss_pred << ',' << t.loss_dist << ',' << t.distance << ','
            << (t.valid ? 1 : 0) << '\n';
    }
}

}  // namespace cgt
