#include "cgt/retrain.hpp"

#include "cgt/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace cgt {

void EmbeddingConfig::validate() const {
    if (!(gamma_edge >= 0.0) || !std::isfinite(gamma_edge)) throw ConfigError("gamma_edge must be finite and >= 0");
    if (!(gamma_time >= 0.0) || !std::isfinite(gamma_time)) throw ConfigError("gamma_time must be finite and >= 0");
}

namespace {

Tensor amplify(const Tensor& a, const std::vector<NodePair>& edges, double factor, bool renormalize) {
    const std::size_t n = a.dim(0);
    std::vector<double> v(a.data().begin(), a.data().end());
    std::vector<double> before(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) before[i] += v[i * n + j];
    }
    std::vector<bool> touched(n, false);
    for (const auto& [i, j] : edges) {
        v[i * n + j] *= factor;
        v[j * n + i] *= factor;
        touched[i] = touched[j] = true;
    }
    if (renormalize) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!touched[i]) continue;
            double after = 0.0;
            for (std::size_t j = 0; j < n; ++j) after += v[i * n + j];
            if (after == 0.0) continue;
            const double s = before[i] / after;
            for (std::size_t j = 0; j < n; ++j) v[i * n + j] *= s;
        }
    }
    return Tensor(a.shape(), std::move(v));
}

std::vector<NodePair> unique_edges(const std::vector<NodePair>& delta_a, std::size_t n) {
    std::vector<NodePair> out;
    for (auto [i, j] : delta_a) {
        if (i >= n || j >= n) {
            throw ContractError("embed_explanation: edge (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") outside a " + std::to_string(n) + "-node graph");
        }
        if (i == j) throw ContractError("embed_explanation: self-loop key edge");
        if (i > j) std::swap(i, j);
        if (std::find(out.begin(), out.end(), NodePair{i, j}) == out.end()) out.emplace_back(i, j);
    }
    return out;
}

std::vector<FlowWindow> scale_slices(const std::vector<FlowWindow>& windows, const std::vector<std::size_t>& slices,
                                     double factor) {
    std::vector<FlowWindow> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        FlowWindow e = w;
        if (!slices.empty() && factor != 1.0) {
            const std::size_t t_len = w.x.dim(0);
            const std::size_t stride = w.x.size() / t_len;
            std::vector<double> v(w.x.data().begin(), w.x.data().end());
            for (std::size_t t : slices) {
                if (t >= t_len) {
                    throw ContractError("embed_explanation: slice " + std::to_string(t) + " outside window " +
                                        std::to_string(t_len));
                }
                for (std::size_t k = 0; k < stride; ++k) v[t * stride + k] *= factor;
            }
            e.x = Tensor(w.x.shape(), std::move(v));
        }
        out.push_back(std::move(e));
    }
    return out;
}

GraphSpec embed_graph(const GraphSpec& graph, const std::vector<NodePair>& delta_a, const EmbeddingConfig& config) {
    const auto edges = unique_edges(delta_a, graph.n_nodes);
    GraphSpec g = graph;
    if (edges.empty() || (config.gamma_edge == 0.0 && !config.renormalize)) return g;
    const double f = 1.0 + config.gamma_edge;
    g.a_gcn = amplify(graph.a_gcn, edges, f, config.renormalize);
    g.a_geo = amplify(graph.a_geo, edges, f, config.renormalize);
    g.a_sem = amplify(graph.a_sem, edges, f, config.renormalize);
    return g;
}

}  // namespace

EmbeddedData embed_explanation(const GraphSpec& graph, const std::vector<FlowWindow>& windows,
                               const std::vector<NodePair>& delta_a, const std::vector<std::size_t>& delta_x,
                               const EmbeddingConfig& config) {
    config.validate();
    return {embed_graph(graph, delta_a, config), scale_slices(windows, delta_x, 1.0 + config.gamma_time)};
}

DatasetBundle embed_explanation(const DatasetBundle& bundle, const std::vector<NodePair>& delta_a,
                                const std::vector<std::size_t>& delta_x, const EmbeddingConfig& config) {
    config.validate();
    DatasetBundle out = bundle;
    out.graph = embed_graph(bundle.graph, delta_a, config);
    const double f = 1.0 + config.gamma_time;
    out.train = scale_slices(bundle.train, delta_x, f);
    out.val = scale_slices(bundle.val, delta_x, f);
    out.test = scale_slices(bundle.test, delta_x, f);
    return out;
}

std::vector<NodePair> key_edges(const CounterfactualResult& result) {
    std::vector<NodePair> out;
    if (!result.valid) return out;
    for (const auto& e : result.delta_a) out.emplace_back(e.i, e.j);
    return out;
}

std::vector<std::size_t> key_slices(const CounterfactualResult& result) {
    if (!result.valid) return {};
    return result.delta_x;
}

PredictionReport evaluate_test(const Model& model, const DatasetBundle& bundle, const ForwardOptions& options) {
    const auto raw = denormalize(bundle.test, bundle.stats);
    std::vector<Tensor> y, y_hat;
    y.reserve(raw.size());
    for (const auto& w : raw) y.push_back(w.y);
    for (const auto& p : predict(model, bundle.graph, bundle.test, options)) y_hat.push_back(denormalize(p, bundle.stats));
    return prediction_metrics(y, y_hat, kMapeEpsilon, "test");
}

RetrainResult retrain(const Model& baseline, const DatasetBundle& original, const DatasetBundle& embedded,
                      const TrainConfig& config, const RetrainOptions& options) {
    const Model init = options.warm_start ? baseline.clone() : Model(baseline.config());
    TrainResult trained = train(init, embedded, config);
    RetrainResult r{trained.model, trained, evaluate_test(baseline, original), {}, 0.0};
    r.retrained = evaluate_test(r.model, embedded);
    r.mae_difference = r.retrained.mae - r.baseline.mae;
    return r;
}

nlohmann::json to_json(const RetrainResult& r) {
    return {{"schema", "cgt.retrain/1"},
            {"baseline", to_json(r.baseline)},
            {"retrained", to_json(r.retrained)},
            {"mae_difference", r.mae_difference},
            {"best_epoch", r.training.best_epoch},
            {"best_val_loss", r.training.best_val_loss}};
}

void write_side_by_side_csv(const RetrainResult& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << "metric,baseline,retrained,difference\n" << std::setprecision(17);
    out << "mae," << r.baseline.mae << ',' << r.retrained.mae << ',' << r.retrained.mae - r.baseline.mae << '\n';
    out << "mape_percent,";
    if (r.baseline.mape_percent && r.retrained.mape_percent) {
        out << *r.baseline.mape_percent << ',' << *r.retrained.mape_percent << ','
            << *r.retrained.mape_percent - *r.baseline.mape_percent << '\n';
    } else {
        out << (r.baseline.mape_percent ? std::to_string(*r.baseline.mape_percent) : "n/a") << ','
            << (r.retrained.mape_percent ? std::to_string(*r.retrained.mape_percent) : "n/a") << ",n/a\n";
    }
    out << "rmse," << r.baseline.rmse << ',' << r.retrained.rmse << ',' << r.retrained.rmse - r.baseline.rmse << '\n';
}

}  // namespace cgt
