#pragma once

// Perturbation masks over the spatial adjacency (M_S) and the input time
// slices (M_F).
//
// Both masks keep pre-sigmoid logits. The spatial mask stores only the
// strict upper triangle; the materialized N x N matrix mirrors it, so
// symmetry holds by construction and the lower triangle never receives a
// gradient. Positions outside the structural support of the graph are
// frozen at 1.

#include "cgt/graph.hpp"
#include "cgt/tensor.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace cgt {

// Logit whose sigmoid equals `p`; p must lie in (0, 1).
double logit(double p);

class SpatialMask {
public:
    // Every off-diagonal position is maskable.
    SpatialMask(std::size_t n, double init = 0.5);
    // Only the structural pairs of `graph` are maskable.
    explicit SpatialMask(const GraphSpec& graph, double init = 0.5);

    std::size_t n() const { return n_; }
    const Tensor& logits() const { return logits_; }
    Tensor& logits() { return logits_; }
    const std::vector<NodePair>& pairs() const { return pairs_; }
    bool maskable(std::size_t i, std::size_t j) const;

    // Add U[-amount, amount] noise to every maskable logit.
    void jitter(double amount, std::uint64_t seed);

    // Set maskable logits directly (one per pair, in pairs() order).
    void set_pair_logits(const std::vector<double>& values);

private:
    std::size_t n_;
    Tensor logits_;            // [n(n-1)/2], requires grad
    Tensor free_;              // [n(n-1)/2], 1 where maskable
    std::vector<NodePair> pairs_;

    friend Tensor materialize_spatial(const SpatialMask& mask);
    friend Tensor spatial_distance_relaxed(const SpatialMask& mask);
};

class TemporalMask {
public:
    TemporalMask(std::size_t t, double init = 0.5);

    std::size_t length() const { return logits_.size(); }
    const Tensor& logits() const { return logits_; }
    Tensor& logits() { return logits_; }
    void jitter(double amount, std::uint64_t seed);

private:
    Tensor logits_;  // [T], requires grad
};

// Continuous N x N mask: sigmoid of the mirrored logits on maskable pairs,
// 1 on the diagonal and on frozen pairs. Differentiable in the logits.
Tensor materialize_spatial(const SpatialMask& mask);
// Continuous length-T mask.
Tensor materialize_temporal(const TemporalMask& mask);

enum class MaskSource { spatial, temporal };

struct BinaryMask {
    MaskSource source = MaskSource::spatial;
    double threshold = 0.5;
    Shape shape;                  // {N, N} or {T}
    std::vector<double> entries;  // 0 or 1

    Tensor tensor() const { return Tensor(shape, entries); }
    std::size_t zeros() const;
};

// entry = 1 iff sigmoid(logit) >= tau; frozen positions and the diagonal stay 1.
BinaryMask threshold(const SpatialMask& mask, double tau = 0.5);
BinaryMask threshold(const TemporalMask& mask, double tau = 0.5);

// Identity masks.
BinaryMask identity_spatial(std::size_t n);
BinaryMask identity_temporal(std::size_t t);

// Binary spatial mask that zeroes exactly the given undirected pairs.
BinaryMask spatial_from_pairs(std::size_t n, const std::vector<NodePair>& removed);
// Binary temporal mask that zeroes exactly the given slices.
BinaryMask temporal_from_slices(std::size_t t, const std::vector<std::size_t>& removed);

// Re-embed a binary mask as saturated logits (+20 kept, -20 removed).
SpatialMask spatial_from_binary(const GraphSpec& graph, const BinaryMask& mask);
TemporalMask temporal_from_binary(const BinaryMask& mask);

// Undirected pairs (i < j) zeroed by a spatial mask, in lexicographic order.
std::vector<NodePair> removed_pairs(const BinaryMask& mask);
// Slice indices zeroed by a temporal mask, ascending.
std::vector<std::size_t> removed_slices(const BinaryMask& mask);

struct Perturbed {
    GraphSpec graph;  // every adjacency multiplied by M_S
    Tensor x;         // M_F broadcast over nodes and channels
};

// A_bar = M_S * A for A_GCN, A_Geo and A_Sem; X_bar = M_F * X. Either mask
// may be omitted (nullopt means identity).
Perturbed apply(const std::optional<BinaryMask>& mask_s, const std::optional<BinaryMask>& mask_f,
                const GraphSpec& graph, const Tensor& x);

// D(A, A_bar) on binary masks: absolute difference summed over the full
// matrix restricted to structural entries, so one removed undirected edge
// counts 2. The temporal distance is the number of zeroed slices.
double spatial_distance(const GraphSpec& graph, const BinaryMask& mask);
double temporal_distance(const BinaryMask& mask);

// Continuous relaxations used during optimization: sum of (1 - m) over the
// structural entries of the full matrix (both triangles), and over slices.
Tensor spatial_distance_relaxed(const SpatialMask& mask);
Tensor temporal_distance_relaxed(const TemporalMask& mask);

}  // namespace cgt
