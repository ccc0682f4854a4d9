#pragma once

#include "cgt/graph.hpp"
#include "cgt/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cgt {

/// One training instance: T input steps and the following T target steps.
struct FlowWindow {
    Tensor x;  // [T, N, C]
    Tensor y;  // [T, N, C]
    std::size_t window_start = 0;
};

// Per-channel z-score statistics.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
};

struct DatasetBundle {
    GraphSpec graph;
    Tensor series;  // raw [time, N, C]
    NormStats stats;
    std::size_t window = 12;
    std::size_t train_end = 0;  // series index where validation begins
    std::size_t val_end = 0;    // series index where test begins
    std::vector<FlowWindow> train, val, test;  // normalized
    std::vector<std::string> warnings;

    std::size_t channels() const { return series.dim(2); }
};

// Split `series` 6:2:2 along time, compute statistics on the training part,
// and cut stride-1 windows inside each part so no window crosses a boundary.
DatasetBundle build_bundle(std::size_t n_nodes, std::vector<Edge> edges, const std::vector<double>& weights,
                           const Tensor& series, std::size_t window, const GraphOptions& options);

// Mean/std per channel over a [time, N, C] series; zero std is replaced by 1
// and reported through `warnings`.
NormStats compute_stats(const Tensor& series, std::vector<std::string>* warnings = nullptr);
Tensor normalize(const Tensor& t, const NormStats& stats);
Tensor denormalize(const Tensor& t, const NormStats& stats);

// Windows with their x/y in raw units.
std::vector<FlowWindow> denormalize(const std::vector<FlowWindow>& windows, const NormStats& stats);

// First `count` windows of a seeded shuffle (all of them when count >= size).
std::vector<FlowWindow> sample_windows(const std::vector<FlowWindow>& windows, std::size_t count,
                                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic generator with planted structure

struct SyntheticSpec {
    std::size_t n_nodes = 12;
    double edge_density = 0.25;
    // Directed (source, target): the target's flow is a lagged copy of the
    // source scaled by signal_strength.
    std::vector<NodePair> planted_edges;
    // Delay of the planted copy in steps; 0 means the window length, so a
    // target's next T values are exactly its source's last T inputs.
    std::size_t edge_lag = 0;
    // Window positions (0..T-1) that carry the autoregressive dependence.
    // Empty means {T-1}, i.e. plain lag-1 dynamics.
    std::vector<std::size_t> planted_slices;
    double signal_strength = 1.0;
    double noise_std = 0.05;
    double snr_floor = 5.0;
    double persistence = 0.8;
    double base_level = 100.0;
    double scale = 10.0;
    std::size_t series_length = 2000;
    std::size_t window = 12;
    std::size_t channels = 1;
    std::uint64_t seed = 0;
    GraphOptions graph;
};

DatasetBundle generate(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// CSV ingestion

struct IngestOptions {
    std::size_t window = 12;
    std::size_t channels = 1;
    GraphOptions graph;
};

// adjacency CSV: header, then `from,to,cost` rows.
// flow CSV: header, then one row per time step with N*C columns ordered by
// node, then channel.
DatasetBundle ingest_csv(const std::filesystem::path& adjacency_path, const std::filesystem::path& flow_path,
                         const IngestOptions& options);

void export_csv(const DatasetBundle& bundle, const std::filesystem::path& adjacency_path,
                const std::filesystem::path& flow_path);

// Single-file binary cache ("CGTBNDL" + format version).
constexpr std::uint32_t kBundleCacheVersion = 1;
void save_bundle_cache(const DatasetBundle& bundle, const std::filesystem::path& path);
DatasetBundle load_bundle_cache(const std::filesystem::path& path);

}  // namespace cgt
