#include "cgt/masks.hpp"

#include "cgt/error.hpp"
#include "cgt/rng.hpp"

#include <cmath>
#include <string>

namespace cgt {

namespace {

constexpr double kSaturated = 20.0;

std::size_t triangle_size(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

void check_init(double init) {
    if (!(init > 0.0 && init < 1.0)) {
        throw ConfigError("mask init must lie in (0, 1), got " + std::to_string(init));
    }
}

}  // namespace

double logit(double p) {
    check_init(p);
    return std::log(p / (1.0 - p));
}

SpatialMask::SpatialMask(std::size_t n, double init)
    : n_(n), logits_(Shape{triangle_size(n)}, logit(init)), free_(Shape{triangle_size(n)}, 1.0) {
    logits_.set_requires_grad(true);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) pairs_.emplace_back(i, j);
    }
}

SpatialMask::SpatialMask(const GraphSpec& graph, double init)
    : n_(graph.n_nodes),
      logits_(Shape{triangle_size(graph.n_nodes)}, kSaturated),
      free_(Shape{triangle_size(graph.n_nodes)}, 0.0),
      pairs_(structural_pairs(graph)) {
    const double l = logit(init);
    auto lg = logits_.data_mut();
    auto fr = free_.data_mut();
    for (const auto& [i, j] : pairs_) {
        const std::size_t k = upper_index(n_, i, j);
        lg[k] = l;
        fr[k] = 1.0;
    }
    logits_.set_requires_grad(true);
}

bool SpatialMask::maskable(std::size_t i, std::size_t j) const {
    if (i == j || i >= n_ || j >= n_) return false;
    return free_.data()[upper_index(n_, i, j)] != 0.0;
}

void SpatialMask::jitter(double amount, std::uint64_t seed) {
    if (amount <= 0.0) return;
    Rng rng(seed);
    auto lg = logits_.data_mut();
    for (const auto& [i, j] : pairs_) lg[upper_index(n_, i, j)] += rng.uniform(-amount, amount);
}

void SpatialMask::set_pair_logits(const std::vector<double>& values) {
    if (values.size() != pairs_.size()) {
        throw DimensionError("SpatialMask: expected " + std::to_string(pairs_.size()) + " logits, got " +
                             std::to_string(values.size()));
    }
    auto lg = logits_.data_mut();
    for (std::size_t k = 0; k < pairs_.size(); ++k) lg[upper_index(n_, pairs_[k].first, pairs_[k].second)] = values[k];
}

TemporalMask::TemporalMask(std::size_t t, double init) : logits_(Shape{t}, logit(init)) {
    logits_.set_requires_grad(true);
}

void TemporalMask::jitter(double amount, std::uint64_t seed) {
    if (amount <= 0.0) return;
    Rng rng(seed);
    for (double& v : logits_.data_mut()) v += rng.uniform(-amount, amount);
}

Tensor materialize_spatial(const SpatialMask& mask) {
    // free * sigmoid(logit) + (1 - free): frozen entries are a constant 1.
    Tensor fixed = affine(mask.free_, -1.0, 1.0);
    Tensor upper = add(mul(sigmoid(mask.logits_), mask.free_), fixed);
    return symmetric_from_upper(upper, mask.n_, 1.0);
}

Tensor materialize_temporal(const TemporalMask& mask) { return sigmoid(mask.logits()); }

std::size_t BinaryMask::zeros() const {
    std::size_t z = 0;
    for (double v : entries) z += (v == 0.0);
    return z;
}

namespace {

bool keeps(double logit_value, double tau) { return 1.0 / (1.0 + std::exp(-logit_value)) >= tau; }

}  // namespace

BinaryMask threshold(const SpatialMask& mask, double tau) {
    BinaryMask out = identity_spatial(mask.n());
    out.threshold = tau;
    const auto lg = mask.logits().data();
    const std::size_t n = mask.n();
    for (const auto& [i, j] : mask.pairs()) {
        if (!keeps(lg[upper_index(n, i, j)], tau)) {
            out.entries[i * n + j] = 0.0;
            out.entries[j * n + i] = 0.0;
        }
    }
    return out;
}

BinaryMask threshold(const TemporalMask& mask, double tau) {
    BinaryMask out = identity_temporal(mask.length());
    out.threshold = tau;
    const auto lg = mask.logits().data();
    for (std::size_t t = 0; t < lg.size(); ++t) {
        if (!keeps(lg[t], tau)) out.entries[t] = 0.0;
    }
    return out;
}

BinaryMask identity_spatial(std::size_t n) {
    return BinaryMask{MaskSource::spatial, 0.5, Shape{n, n}, std::vector<double>(n * n, 1.0)};
}

BinaryMask identity_temporal(std::size_t t) {
    return BinaryMask{MaskSource::temporal, 0.5, Shape{t}, std::vector<double>(t, 1.0)};
}

BinaryMask spatial_from_pairs(std::size_t n, const std::vector<NodePair>& removed) {
    BinaryMask out = identity_spatial(n);
    for (const auto& [i, j] : removed) {
        if (i >= n || j >= n || i == j) {
            throw ContractError("spatial_from_pairs: invalid pair (" + std::to_string(i) + ", " + std::to_string(j) +
                                ")");
        }
        out.entries[i * n + j] = 0.0;
        out.entries[j * n + i] = 0.0;
    }
    return out;
}

BinaryMask temporal_from_slices(std::size_t t, const std::vector<std::size_t>& removed) {
    BinaryMask out = identity_temporal(t);
    for (std::size_t s : removed) {
        if (s >= t) throw ContractError("temporal_from_slices: slice " + std::to_string(s) + " out of range");
        out.entries[s] = 0.0;
    }
    return out;
}

SpatialMask spatial_from_binary(const GraphSpec& graph, const BinaryMask& mask) {
    SpatialMask out(graph);
    const std::size_t n = graph.n_nodes;
    std::vector<double> values;
    values.reserve(out.pairs().size());
    for (const auto& [i, j] : out.pairs()) values.push_back(mask.entries[i * n + j] != 0.0 ? kSaturated : -kSaturated);
    out.set_pair_logits(values);
    return out;
}

TemporalMask temporal_from_binary(const BinaryMask& mask) {
    TemporalMask out(mask.entries.size());
    auto lg = out.logits().data_mut();
    for (std::size_t t = 0; t < lg.size(); ++t) lg[t] = mask.entries[t] != 0.0 ? kSaturated : -kSaturated;
    return out;
}

std::vector<NodePair> removed_pairs(const BinaryMask& mask) {
    if (mask.shape.size() != 2) throw ContractError("removed_pairs: not a spatial mask");
    const std::size_t n = mask.shape[0];
    std::vector<NodePair> out;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (mask.entries[i * n + j] == 0.0) out.emplace_back(i, j);
        }
    }
    return out;
}

std::vector<std::size_t> removed_slices(const BinaryMask& mask) {
    if (mask.shape.size() != 1) throw ContractError("removed_slices: not a temporal mask");
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < mask.entries.size(); ++t) {
        if (mask.entries[t] == 0.0) out.push_back(t);
    }
    return out;
}

Perturbed apply(const std::optional<BinaryMask>& mask_s, const std::optional<BinaryMask>& mask_f,
                const GraphSpec& graph, const Tensor& x) {
    NoGradGuard no_grad;
    Perturbed out{graph, x.detach()};
    if (mask_s) {
        if (mask_s->shape != Shape{graph.n_nodes, graph.n_nodes}) {
            throw DimensionError("apply: spatial mask " + shape_str(mask_s->shape) + " vs graph of " +
                                 std::to_string(graph.n_nodes) + " nodes");
        }
        Tensor m = mask_s->tensor();
        out.graph.a_gcn = mul(graph.a_gcn, m);
        out.graph.a_geo = mul(graph.a_geo, m);
        out.graph.a_sem = mul(graph.a_sem, m);
    }
    if (mask_f) {
        if (x.rank() != 3 || mask_f->entries.size() != x.dim(0)) {
            throw DimensionError("apply: temporal mask " + shape_str(mask_f->shape) + " vs input " +
                                 shape_str(x.shape()));
        }
        out.x = mul(x, Tensor(Shape{x.dim(0), 1, 1}, mask_f->entries));
    }
    return out;
}

double spatial_distance(const GraphSpec& graph, const BinaryMask& mask) {
    const std::size_t n = graph.n_nodes;
    if (mask.shape != Shape{n, n}) throw DimensionError("spatial_distance: mask " + shape_str(mask.shape));
    double d = 0.0;
    for (const auto& [i, j] : structural_pairs(graph)) {
        d += std::abs(1.0 - mask.entries[i * n + j]) + std::abs(1.0 - mask.entries[j * n + i]);
    }
    return d;
}

double temporal_distance(const BinaryMask& mask) {
    double d = 0.0;
    for (double v : mask.entries) d += std::abs(1.0 - v);
    return d;
}

Tensor spatial_distance_relaxed(const SpatialMask& mask) {
    Tensor removed = mul(affine(sigmoid(mask.logits()), -1.0, 1.0), mask.free_);
    return scale(sum(removed), 2.0);
}

Tensor temporal_distance_relaxed(const TemporalMask& mask) {
    return sum(affine(sigmoid(mask.logits()), -1.0, 1.0));
}

}  // namespace cgt
