#pragma once

// Explanation embedding: amplify the key edges in every adjacency and the
// key input time slices, then retrain on the embedded data.

#include "cgt/data.hpp"
#include "cgt/metrics.hpp"
#include "cgt/train.hpp"

#include <filesystem>
#include <vector>

namespace cgt {

struct EmbeddingConfig {
    double gamma_edge = 0.5;
    double gamma_time = 0.5;
    // Rescale each touched adjacency row back to its original sum.
    bool renormalize = false;

    void validate() const;
};

struct EmbeddedData {
    GraphSpec graph;
    std::vector<FlowWindow> windows;
};

// Nonzero entries (i, j) and (j, i) of A_GCN, A_Geo and A_Sem for every key
// edge are multiplied by (1 + gamma_edge); zero entries stay zero, so the
// topology is unchanged. Input slices t in `delta_x` are multiplied by
// (1 + gamma_time) in every window (normalized units); targets are untouched.
EmbeddedData embed_explanation(const GraphSpec& graph, const std::vector<FlowWindow>& windows,
                               const std::vector<NodePair>& delta_a, const std::vector<std::size_t>& delta_x,
                               const EmbeddingConfig& config);

// Applies the same embedding to the graph and all three splits.
DatasetBundle embed_explanation(const DatasetBundle& bundle, const std::vector<NodePair>& delta_a,
                                const std::vector<std::size_t>& delta_x, const EmbeddingConfig& config);

// Key edges/slices of a result (empty when the result is invalid).
std::vector<NodePair> key_edges(const CounterfactualResult& result);
std::vector<std::size_t> key_slices(const CounterfactualResult& result);

struct RetrainOptions {
    // Start from the baseline's trained parameters instead of a fresh
    // initialization with the baseline's config seed.
    bool warm_start = false;
};

struct RetrainResult {
    Model model;
    TrainResult training;
    PredictionReport baseline;   // baseline model on the original test split
    PredictionReport retrained;  // retrained model on the embedded test split
    double mae_difference = 0.0;  // retrained - baseline
};

// Test-split metrics in raw units.
PredictionReport evaluate_test(const Model& model, const DatasetBundle& bundle, const ForwardOptions& options = {});

RetrainResult retrain(const Model& baseline, const DatasetBundle& original, const DatasetBundle& embedded,
                      const TrainConfig& config, const RetrainOptions& options = {});

nlohmann::json to_json(const RetrainResult& result);

// metric,baseline,retrained,difference (mae, mape_percent, rmse).
void write_side_by_side_csv(const RetrainResult& result, const std::filesystem::path& path);

}  // namespace cgt
