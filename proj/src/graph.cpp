#include "cgt/graph.hpp"

#include "cgt/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cgt {

namespace {

void check_edge(std::size_t n, const Edge& e) {
    if (e.from >= n || e.to >= n) {
        throw ConfigError("edge (" + std::to_string(e.from) + "," + std::to_string(e.to) +
                          ") out of range for " + std::to_string(n) + " nodes");
    }
}

}  // namespace

std::vector<double> gaussian_kernel_weights(const std::vector<Edge>& edges) {
    std::vector<double> weights(edges.size(), 1.0);
    if (edges.empty()) return weights;
    double mean = 0.0;
    for (const auto& e : edges) mean += e.cost;
    mean /= static_cast<double>(edges.size());
    double var = 0.0;
    for (const auto& e : edges) var += (e.cost - mean) * (e.cost - mean);
    const double sigma = std::sqrt(var / static_cast<double>(edges.size()));
    if (sigma == 0.0) return weights;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const double w = std::exp(-(edges[i].cost * edges[i].cost) / (sigma * sigma));
        weights[i] = w < 0.1 ? 0.0 : w;
    }
    return weights;
}

Tensor gcn_adjacency(std::size_t n, const std::vector<Edge>& edges, const std::vector<double>& weights,
                     bool self_loops) {
    if (weights.size() != edges.size()) throw ConfigError("gcn_adjacency: one weight per edge required");
    Tensor a = Tensor::zeros({n, n});
    auto v = a.data_mut();
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto& e = edges[k];
        check_edge(n, e);
        if (e.from == e.to) continue;
        v[e.from * n + e.to] = weights[k];
        v[e.to * n + e.from] = weights[k];
    }
    if (self_loops) {
        for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    }
    return a;
}

Tensor geo_adjacency(std::size_t n, const std::vector<Edge>& edges, bool self_loops) {
    Tensor a = Tensor::zeros({n, n});
    auto v = a.data_mut();
    for (const auto& e : edges) {
        check_edge(n, e);
        if (e.from == e.to) continue;
        v[e.from * n + e.to] = 1.0;
        v[e.to * n + e.from] = 1.0;
    }
    if (self_loops) {
        for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    }
    return a;
}

Tensor semantic_adjacency(const Tensor& series, const Tensor& a_geo, std::size_t k, bool self_loops) {
    if (series.rank() != 3) throw DimensionError("semantic_adjacency: series must be [time, N, C]");
    const std::size_t steps = series.dim(0);
    const std::size_t n = series.dim(1);
    const std::size_t c = series.dim(2);
    if (a_geo.shape() != Shape{n, n}) throw DimensionError("semantic_adjacency: a_geo must be N x N");
    const auto s = series.data();
    std::vector<double> mean(n, 0.0);
    std::vector<double> norm(n, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < n; ++i) mean[i] += s[(t * n + i) * c];
    }
    for (auto& m : mean) m /= std::max<double>(1.0, static_cast<double>(steps));
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const double d = s[(t * n + i) * c] - mean[i];
            norm[i] += d * d;
        }
    }
    auto corr = [&](std::size_t i, std::size_t j) {
        if (norm[i] == 0.0 || norm[j] == 0.0) return -2.0;
        double acc = 0.0;
        for (std::size_t t = 0; t < steps; ++t) {
            acc += (s[(t * n + i) * c] - mean[i]) * (s[(t * n + j) * c] - mean[j]);
        }
        return acc / std::sqrt(norm[i] * norm[j]);
    };
    const auto geo = a_geo.data();
    Tensor a = Tensor::zeros({n, n});
    auto v = a.data_mut();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> candidates;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || geo[i * n + j] != 0.0) continue;
            const double r = corr(i, j);
            if (r > -2.0) candidates.emplace_back(r, j);
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const auto& x, const auto& y) { return x.first > y.first; });
        for (std::size_t m = 0; m < std::min(k, candidates.size()); ++m) {
            const std::size_t j = candidates[m].second;
            v[i * n + j] = 1.0;
            v[j * n + i] = 1.0;
        }
    }
    if (self_loops) {
        for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    }
    return a;
}

GraphSpec build_graph(std::size_t n, std::vector<Edge> edges, const std::vector<double>& weights,
                      const Tensor& train_series, const GraphOptions& options) {
    GraphSpec g;
    g.n_nodes = n;
    g.options = options;
    g.a_gcn = gcn_adjacency(n, edges, weights, options.gcn_self_loops);
    g.a_geo = geo_adjacency(n, edges, options.attention_self_loops);
    g.a_sem = semantic_adjacency(train_series, g.a_geo, options.semantic_k, options.attention_self_loops);
    g.edges = std::move(edges);
    return g;
}

std::vector<NodePair> structural_pairs(const GraphSpec& graph) {
    const std::size_t n = graph.n_nodes;
    std::vector<NodePair> pairs;
    const auto gcn = graph.a_gcn.data();
    const auto geo = graph.a_geo.data();
    const auto sem = graph.a_sem.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const std::size_t ij = i * n + j;
            const std::size_t ji = j * n + i;
            if (gcn[ij] != 0.0 || geo[ij] != 0.0 || sem[ij] != 0.0 || gcn[ji] != 0.0 || geo[ji] != 0.0 ||
                sem[ji] != 0.0) {
                pairs.emplace_back(i, j);
            }
        }
    }
    return pairs;
}

std::size_t upper_index(std::size_t n, std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    if (i == j || j >= n) throw ContractError("upper_index: not a strict upper-triangle position");
    // Entries before row i: sum_{r<i} (n - 1 - r)
    return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

}  // namespace cgt
