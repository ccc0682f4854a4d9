#pragma once

#include "cgt/explainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cgt {

// Mean of the per-explanation L_pred (non-positive). Throws ContractError
// when `results` is empty.
double fidelity(const std::vector<CounterfactualResult>& results);

struct SizeReport {
    double e_size = 0.0;
    double sparsity = 1.0;
    std::vector<std::string> warnings;
};

// e-Size = mean explanation size; Sparsity = (K - e-Size) / K. An e-Size
// above K is reported as a warning and the raw (negative) sparsity is
// kept. K = 0 yields sparsity 1 with a warning.
SizeReport explanation_size(const std::vector<CounterfactualResult>& results, std::size_t k_edges);
SizeReport explanation_size(const std::vector<std::size_t>& sizes, std::size_t k_edges);

double mae(const std::vector<Tensor>& a, const std::vector<Tensor>& b);
double mae(const Tensor& a, const Tensor& b);

// MAE(Y_bar, Y) - MAE(Y_hat, Y).
double delta_mae(const std::vector<Tensor>& y, const std::vector<Tensor>& y_hat, const std::vector<Tensor>& y_bar);
double delta_mae(const Tensor& y, const Tensor& y_hat, const Tensor& y_bar);

struct PredictionReport {
    std::string split;
    std::size_t horizon = 0;
    double mae = 0.0;
    std::optional<double> mape_percent;  // empty when every |y| < epsilon
    double rmse = 0.0;
};

constexpr double kMapeEpsilon = 1.0;

// MAPE skips ground-truth entries with |y| < epsilon.
PredictionReport prediction_metrics(const std::vector<Tensor>& y, const std::vector<Tensor>& y_hat,
                                    double mape_epsilon = kMapeEpsilon, std::string split = "test");
PredictionReport prediction_metrics(const Tensor& y, const Tensor& y_hat, double mape_epsilon = kMapeEpsilon,
                                    std::string split = "test");

struct InstanceMetrics {
    std::uint64_t seed = 0;
    double loss_pred = 0.0;
    std::size_t size = 0;
    double delta_mae = 0.0;
    bool valid = false;
};

struct ExplanationReport {
    std::string explainer_id;
    std::size_t n_explanations = 0;  // H
    std::size_t k_edges = 0;
    double fidelity = 0.0;
    double abs_fidelity = 0.0;
    double e_size = 0.0;
    double sparsity = 1.0;
    double delta_mae = 0.0;  // mean over explanations
    std::vector<InstanceMetrics> instances;
    std::vector<std::string> warnings;
};

ExplanationReport make_report(const std::vector<CounterfactualResult>& results, std::size_t k_edges);

nlohmann::json to_json(const ExplanationReport& report);
nlohmann::json to_json(const PredictionReport& report);

// One CSV row per explanation:
// dataset,explainer,seed,fidelity,abs_fidelity,e_size,sparsity,delta_mae,valid
void write_report_csv(const ExplanationReport& report, const std::string& dataset, const std::filesystem::path& path);

struct ReportRow {
    std::string dataset;
    std::string explainer;
    std::uint64_t seed = 0;
    double fidelity = 0.0;
    double abs_fidelity = 0.0;
    double e_size = 0.0;
    double sparsity = 0.0;
    double delta_mae = 0.0;
    bool valid = false;
};

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);

// Mean per (dataset, explainer), in first-seen order. Columns:
// dataset,explainer,runs,fidelity,e_size,sparsity,delta_mae
std::vector<ReportRow> aggregate_rows(const std::vector<ReportRow>& rows, std::vector<std::size_t>* counts = nullptr);
void write_comparison_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path);

}  // namespace cgt
