#pragma once

// Comparison explainers. All of them score their candidate with the same
// CandidateEvaluator as the counterfactual search and emit the same
// CounterfactualResult schema; none of them back-propagates.

#include "cgt/explainer.hpp"

#include <optional>
#include <string>

namespace cgt {

enum class BaselineKind { random, one_hop, attention_score };

std::string to_string(BaselineKind k);
BaselineKind parse_baseline_kind(const std::string& s);

// One-shot mask: maskable logits ~ U[-1, 1], then the usual sigmoid and
// threshold. Validity, threshold and seed come from `config`.
CounterfactualResult random_explain(const Model& model, const GraphSpec& graph, const std::vector<FlowWindow>& windows,
                                    const NormStats& stats, const ExplainerConfig& config);

// Smallest valid subset of the structural edges incident to `center`:
// exhaustive by subset size up to kOneHopExhaustiveDegree incident edges,
// greedy by marginal prediction change beyond. Equal-size valid subsets are
// ranked by prediction change. Without a center every node is tried and the
// smallest valid result wins (ties: larger change, then lower node id).
constexpr std::size_t kOneHopExhaustiveDegree = 12;
CounterfactualResult one_hop_explain(const Model& model, const GraphSpec& graph,
                                     const std::vector<FlowWindow>& windows, const NormStats& stats,
                                     const ExplainerConfig& config, std::optional<std::size_t> center = std::nullopt);

struct EdgeScore {
    std::size_t i = 0;
    std::size_t j = 0;
    double score = 0.0;
};

// Mean of (alpha_ij + alpha_ji) / 2 over every recorded attention map
// (all spatial layers, heads and time steps, all windows), per structural
// pair. Sorted by descending score, ties by (i, j).
std::vector<EdgeScore> attention_edge_scores(const Model& model, const GraphSpec& graph,
                                             const std::vector<FlowWindow>& windows);

// Removes the top_k highest-scoring edges. top_k above the structural edge
// count is clamped with a warning. The full ranking is stored in
// params["ranking"].
CounterfactualResult attention_explain(const Model& model, const GraphSpec& graph,
                                       const std::vector<FlowWindow>& windows, const NormStats& stats,
                                       const ExplainerConfig& config, std::size_t top_k);

}  // namespace cgt
