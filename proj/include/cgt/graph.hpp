#pragma once

#include "cgt/tensor.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace cgt {

struct Edge {
    std::size_t from = 0;
    std::size_t to = 0;
    double cost = 1.0;
};

struct GraphOptions {
    // Add the identity to A_GCN before normalization.
    bool gcn_self_loops = false;
    // Let every node attend to itself in the geographic/semantic attention.
    bool attention_self_loops = true;
    // Semantic neighbours per node (top Pearson correlation, non-geographic).
    std::size_t semantic_k = 3;
};

/// Road graph plus the three adjacencies the model consumes.
///
/// a_gcn holds distance-kernel weights (symmetric), a_geo the binary
/// geographic neighbour indicator of the declared edges, and a_sem the
/// binary semantic neighbour indicator. Attention adjacencies carry a unit
/// diagonal when options.attention_self_loops is set.
struct GraphSpec {
    std::size_t n_nodes = 0;
    std::vector<Edge> edges;
    Tensor a_gcn;
    Tensor a_geo;
    Tensor a_sem;
    GraphOptions options;

    std::size_t edge_count() const { return edges.size(); }
};

using NodePair = std::pair<std::size_t, std::size_t>;

// w = exp(-d^2 / sigma^2), sigma = std of the costs, weights < 0.1 -> 0.
// All-equal costs (sigma = 0) map to unit weights.
std::vector<double> gaussian_kernel_weights(const std::vector<Edge>& edges);

Tensor gcn_adjacency(std::size_t n, const std::vector<Edge>& edges, const std::vector<double>& weights,
                     bool self_loops);
Tensor geo_adjacency(std::size_t n, const std::vector<Edge>& edges, bool self_loops);

// `series` is [time, N, C]; correlations use channel 0.
Tensor semantic_adjacency(const Tensor& series, const Tensor& a_geo, std::size_t k, bool self_loops);

GraphSpec build_graph(std::size_t n, std::vector<Edge> edges, const std::vector<double>& weights,
                      const Tensor& train_series, const GraphOptions& options);

// Undirected off-diagonal pairs (i < j) where any adjacency is nonzero. These
// are the maskable positions; everything else is frozen.
std::vector<NodePair> structural_pairs(const GraphSpec& graph);

// Flat index of (i, j), i < j, into a row-major strict upper triangle.
std::size_t upper_index(std::size_t n, std::size_t i, std::size_t j);

}  // namespace cgt
