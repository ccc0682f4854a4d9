#pragma once

// Counterfactual search over perturbation masks.
//
// Each iteration thresholds the current logits into a binary candidate,
// evaluates it against the unperturbed prediction, keeps it when it is a
// valid counterfactual no larger than the best so far, and then takes a
// gradient-descent step on L = L_pred + beta * L_dist through the
// continuous mask. The model is never updated.

#include "cgt/data.hpp"
#include "cgt/masks.hpp"
#include "cgt/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cgt {

enum class Dimension { spatial, temporal };

// How beta is read. `absolute` weighs L_dist directly against L_pred in
// squared flow units. `relative` multiplies beta by |L_pred| of the
// all-removed candidate (every maskable edge or every slice), so the
// trade-off no longer depends on the flow scale of the dataset.
enum class BetaMode { absolute, relative };

std::string to_string(BetaMode m);
BetaMode parse_beta_mode(const std::string& s);

std::string to_string(Dimension d);
Dimension parse_dimension(const std::string& s);

struct ExplainerConfig {
    double beta = 0.5;
    BetaMode beta_mode = BetaMode::absolute;
    double alpha = 0.1;
    std::size_t iterations = 300;
    double threshold = 0.5;
    // Absolute validity threshold in flow units. 0 derives it as
    // validity_fraction * MAE(Y_hat, Y) over the explained windows.
    double validity_epsilon = 0.0;
    double validity_fraction = 0.05;
    double init = 0.5;
    double jitter = 0.0;
    unsigned targets = mask_all;
    Dimension dimension = Dimension::spatial;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TraceRecord {
    std::size_t iteration = 0;
    double loss_pred = 0.0;  // continuous objective terms, before the step
    double loss_dist = 0.0;
    double distance = 0.0;  // D of the thresholded candidate
    bool valid = false;
    double mae_change = 0.0;  // MAE(Y_bar, Y_hat) of the candidate, flow units
    std::optional<double> best_distance;
};

struct RemovedEdge {
    std::size_t i = 0;
    std::size_t j = 0;
    double weight_before = 0.0;  // A_GCN weight
};

struct CounterfactualResult {
    std::string explainer = "cgt";
    Dimension dimension = Dimension::spatial;
    bool valid = false;
    BinaryMask mask;  // best candidate; identity when nothing valid was found
    std::vector<RemovedEdge> delta_a;
    std::vector<std::size_t> delta_x;
    double best_distance = 0.0;
    double loss_pred = 0.0;      // -MSE(Y_hat, Y_bar), flow units
    double mae_original = 0.0;   // MAE(Y_hat, Y), flow units
    double mae_perturbed = 0.0;  // MAE(Y_bar, Y)
    double mae_change = 0.0;     // MAE(Y_bar, Y_hat)
    double tau_v = 0.0;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    std::size_t structural_edges = 0;
    std::size_t windows = 0;
    nlohmann::json params = nlohmann::json::object();  // explainer-specific settings
    std::vector<TraceRecord> trace;
    std::vector<std::string> warnings;

    // Explanation size: removed undirected edges or zeroed slices.
    std::size_t size() const { return dimension == Dimension::spatial ? delta_a.size() : delta_x.size(); }
    double delta_mae() const { return mae_perturbed - mae_original; }
};

// Unperturbed predictions and ground truth for a fixed set of windows, used
// to score binary candidates.
class CandidateEvaluator {
public:
    CandidateEvaluator(const Model& model, const GraphSpec& graph, std::vector<FlowWindow> windows,
                       NormStats stats, unsigned targets = mask_all);

    struct Score {
        double loss_pred = 0.0;
        double mae_change = 0.0;
        double mae_perturbed = 0.0;
        double distance = 0.0;
    };

    Score spatial(const BinaryMask& mask) const;
    Score temporal(const BinaryMask& mask) const;

    const Model& model() const { return model_; }
    const GraphSpec& graph() const { return graph_; }
    const std::vector<FlowWindow>& windows() const { return windows_; }
    const std::vector<Tensor>& original() const { return original_; }
    const NormStats& stats() const { return stats_; }
    unsigned targets() const { return targets_; }
    double mae_original() const { return mae_original_; }

private:
    Score score(const ForwardOptions& options, double distance) const;

    Model model_;
    GraphSpec graph_;
    std::vector<FlowWindow> windows_;
    NormStats stats_;
    unsigned targets_;
    std::vector<Tensor> original_;
    double mae_original_ = 0.0;
};

// Identity-mask result carrying the evaluator's baseline numbers.
CounterfactualResult new_result(const CandidateEvaluator& eval, const ExplainerConfig& config, std::string explainer);

// Fill the explanation fields of `result` from a binary candidate.
void set_candidate(CounterfactualResult& result, const CandidateEvaluator& eval, const BinaryMask& mask,
                   const CandidateEvaluator::Score& score);

// -MSE(Phi(A, X), Phi(A_bar, X_bar)); `masked` carries the masks. With
// `stats` the error is measured in flow units, otherwise in model units.
Tensor loss_pred(const Model& model, const GraphSpec& graph, const Tensor& x, const ForwardOptions& masked,
                 const NormStats* stats = nullptr);

// MSE after scaling channel c of both operands by stats.std[c].
Tensor mse_flow(const Tensor& a, const Tensor& b, const NormStats& stats);

// D(A, A_bar) + D(X, X_bar) on binary masks; either may be absent.
double loss_dist(const GraphSpec& graph, const BinaryMask* mask_s, const BinaryMask* mask_f);

// MAE(y_bar, y_hat) >= tau_v, pooled over all tensors. tau_v must be positive.
bool is_valid_counterfactual(const std::vector<Tensor>& y_hat, const std::vector<Tensor>& y_bar, double tau_v);
bool is_valid_counterfactual(const Tensor& y_hat, const Tensor& y_bar, double tau_v);

// Validity threshold for a config on an evaluator.
double validity_threshold(const ExplainerConfig& config, const CandidateEvaluator& eval);

// `windows` are normalized; `stats` convert to flow units for MAE.
CounterfactualResult search_spatial(const Model& model, const GraphSpec& graph, const std::vector<FlowWindow>& windows,
                                    const NormStats& stats, const ExplainerConfig& config);
CounterfactualResult search_temporal(const Model& model, const GraphSpec& graph,
                                     const std::vector<FlowWindow>& windows, const NormStats& stats,
                                     const ExplainerConfig& config);
CounterfactualResult search(const Model& model, const GraphSpec& graph, const std::vector<FlowWindow>& windows,
                            const NormStats& stats, const ExplainerConfig& config);

// A_bar* and X_bar* for one input window.
Perturbed counterfactual_input(const CounterfactualResult& result, const GraphSpec& graph, const Tensor& x);

nlohmann::json to_json(const CounterfactualResult& result);
CounterfactualResult result_from_json(const nlohmann::json& j);
void write_result_json(const CounterfactualResult& result, const std::filesystem::path& path);
CounterfactualResult read_result_json(const std::filesystem::path& path);
// iteration,loss_pred,loss_dist,D,valid
void write_trace_csv(const CounterfactualResult& result, const std::filesystem::path& path);

}  // namespace cgt
