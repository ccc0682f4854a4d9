#include "cgt/metrics.hpp"

#include "cgt/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace cgt {

double fidelity(const std::vector<CounterfactualResult>& results) {
    if (results.empty()) throw ContractError("fidelity: undefined for zero explanations");
    double total = 0.0;
    for (const auto& r : results) total += r.loss_pred;
    return total / static_cast<double>(results.size());
}

SizeReport explanation_size(const std::vector<std::size_t>& sizes, std::size_t k_edges) {
    SizeReport out;
    if (!sizes.empty()) {
        double total = 0.0;
        for (std::size_t s : sizes) total += static_cast<double>(s);
        out.e_size = total / static_cast<double>(sizes.size());
    }
    if (k_edges == 0) {
        out.sparsity = 1.0;
        out.warnings.push_back("sparsity undefined: no structural edges (reported as 1)");
        return out;
    }
    const double k = static_cast<double>(k_edges);
    out.sparsity = (k - out.e_size) / k;
    if (out.e_size > k) {
        std::ostringstream os;
        os << "e-Size " << out.e_size << " exceeds K_edges " << k_edges << "; sparsity " << out.sparsity
           << " lies outside [0, 1]";
        out.warnings.push_back(os.str());
    }
    return out;
}

SizeReport explanation_size(const std::vector<CounterfactualResult>& results, std::size_t k_edges) {
    std::vector<std::size_t> sizes;
    sizes.reserve(results.size());
    for (const auto& r : results) sizes.push_back(r.size());
    return explanation_size(sizes, k_edges);
}

double mae(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) throw DimensionError("mae: tensor count mismatch");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t w = 0; w < a.size(); ++w) {
        if (a[w].shape() != b[w].shape()) {
            throw DimensionError("mae: " + shape_str(a[w].shape()) + " vs " + shape_str(b[w].shape()));
        }
        const auto av = a[w].data();
        const auto bv = b[w].data();
        for (std::size_t k = 0; k < av.size(); ++k) total += std::abs(av[k] - bv[k]);
        count += av.size();
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double mae(const Tensor& a, const Tensor& b) { return mae(std::vector<Tensor>{a}, std::vector<Tensor>{b}); }

double delta_mae(const std::vector<Tensor>& y, const std::vector<Tensor>& y_hat, const std::vector<Tensor>& y_bar) {
    return mae(y_bar, y) - mae(y_hat, y);
}

double delta_mae(const Tensor& y, const Tensor& y_hat, const Tensor& y_bar) { return mae(y_bar, y) - mae(y_hat, y); }

PredictionReport prediction_metrics(const std::vector<Tensor>& y, const std::vector<Tensor>& y_hat,
                                    double mape_epsilon, std::string split) {
    if (y.size() != y_hat.size()) throw DimensionError("prediction_metrics: tensor count mismatch");
    PredictionReport r;
    r.split = std::move(split);
    r.horizon = y.empty() ? 0 : y.front().dim(0);
    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
    std::size_t count = 0, pct_count = 0;
    for (std::size_t w = 0; w < y.size(); ++w) {
        if (y[w].shape() != y_hat[w].shape()) {
            throw DimensionError("prediction_metrics: " + shape_str(y[w].shape()) + " vs " +
                                 shape_str(y_hat[w].shape()));
        }
        const auto t = y[w].data();
        const auto p = y_hat[w].data();
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double e = p[k] - t[k];
            abs_sum += std::abs(e);
            sq_sum += e * e;
            if (std::abs(t[k]) >= mape_epsilon) {
                pct_sum += std::abs(e) / std::abs(t[k]);
                ++pct_count;
            }
        }
        count += t.size();
    }
    if (count > 0) {
        r.mae = abs_sum / static_cast<double>(count);
        r.rmse = std::sqrt(sq_sum / static_cast<double>(count));
    }
    if (pct_count > 0) r.mape_percent = 100.0 * pct_sum / static_cast<double>(pct_count);
    return r;
}

PredictionReport prediction_metrics(const Tensor& y, const Tensor& y_hat, double mape_epsilon, std::string split) {
    return prediction_metrics(std::vector<Tensor>{y}, std::vector<Tensor>{y_hat}, mape_epsilon, std::move(split));
}

ExplanationReport make_report(const std::vector<CounterfactualResult>& results, std::size_t k_edges) {
    ExplanationReport r;
    r.n_explanations = results.size();
    r.k_edges = k_edges;
    r.fidelity = fidelity(results);
    r.abs_fidelity = std::abs(r.fidelity);
    const auto sz = explanation_size(results, k_edges);
    r.e_size = sz.e_size;
    r.sparsity = sz.sparsity;
    r.warnings = sz.warnings;
    r.explainer_id = results.front().explainer;
    double dm = 0.0;
    for (const auto& x : results) {
        if (x.explainer != r.explainer_id) r.explainer_id = "mixed";
        r.instances.push_back({x.seed, x.loss_pred, x.size(), x.delta_mae(), x.valid});
        dm += x.delta_mae();
    }
    r.delta_mae = dm / static_cast<double>(results.size());
    return r;
}

nlohmann::json to_json(const ExplanationReport& r) {
    nlohmann::json inst = nlohmann::json::array();
    for (const auto& i : r.instances) {
        inst.push_back({{"seed", i.seed},
                        {"loss_pred", i.loss_pred},
                        {"size", i.size},
                        {"delta_mae", i.delta_mae},
                        {"valid", i.valid}});
    }
    return {{"schema", "cgt.explanation_report/1"},
            {"explainer", r.explainer_id},
            {"n_explanations", r.n_explanations},
            {"k_edges", r.k_edges},
            {"fidelity", r.fidelity},
            {"abs_fidelity", r.abs_fidelity},
            {"e_size", r.e_size},
            {"sparsity", r.sparsity},
            {"delta_mae", r.delta_mae},
            {"instances", inst},
            {"warnings", r.warnings}};
}

nlohmann::json to_json(const PredictionReport& r) {
    return {{"split", r.split},
            {"horizon", r.horizon},
            {"mae", r.mae},
            {"mape_percent", r.mape_percent ? nlohmann::json(*r.mape_percent) : nlohmann::json(nullptr)},
            {"rmse", r.rmse}};
}

namespace {

const char* kRowHeader = "dataset,explainer,seed,fidelity,abs_fidelity,e_size,sparsity,delta_mae,valid";

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

void write_report_csv(const ExplanationReport& report, const std::string& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << kRowHeader << '\n' << std::setprecision(17);
    const double k = static_cast<double>(report.k_edges);
    for (const auto& i : report.instances) {
        const double sparsity = report.k_edges == 0 ? 1.0 : (k - static_cast<double>(i.size)) / k;
        out << dataset << ',' << report.explainer_id << ',' << i.seed << ',' << i.loss_pred << ','
            << std::abs(i.loss_pred) << ',' << i.size << ',' << sparsity << ',' << i.delta_mae << ','
            << (i.valid ? 1 : 0) << '\n';
    }
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kRowHeader) {
        throw ConfigError(path.string() + ":1: expected header '" + std::string(kRowHeader) + "'");
    }
    std::vector<ReportRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != 9) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 9 columns, got " +
                              std::to_string(cells.size()));
        }
        try {
            ReportRow r;
            r.dataset = cells[0];
            r.explainer = cells[1];
            r.seed = std::stoull(cells[2]);
            r.fidelity = std::stod(cells[3]);
            r.abs_fidelity = std::stod(cells[4]);
            r.e_size = std::stod(cells[5]);
            r.sparsity = std::stod(cells[6]);
            r.delta_mae = std::stod(cells[7]);
            r.valid = cells[8] == "1";
            rows.push_back(r);
        } catch (const std::exception&) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": non-numeric cell");
        }
    }
    return rows;
}

std::vector<ReportRow> aggregate_rows(const std::vector<ReportRow>& rows, std::vector<std::size_t>* counts) {
    std::vector<ReportRow> out;
    std::vector<std::size_t> n;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.dataset, r.explainer);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, out.size()).first;
            ReportRow a;
            a.dataset = r.dataset;
            a.explainer = r.explainer;
            out.push_back(a);
            n.push_back(0);
        }
        auto& a = out[it->second];
        a.fidelity += r.fidelity;
        a.abs_fidelity += r.abs_fidelity;
        a.e_size += r.e_size;
        a.sparsity += r.sparsity;
        a.delta_mae += r.delta_mae;
        ++n[it->second];
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double c = static_cast<double>(n[i]);
        out[i].fidelity /= c;
        out[i].abs_fidelity /= c;
        out[i].e_size /= c;
        out[i].sparsity /= c;
        out[i].delta_mae /= c;
    }
    if (counts) *counts = n;
    return out;
}

void write_comparison_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
    std::vector<std::size_t> counts;
    const auto agg = aggregate_rows(rows, &counts);
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << "dataset,explainer,runs,fidelity,e_size,sparsity,delta_mae\n" << std::setprecision(17);
    for (std::size_t i = 0; i < agg.size(); ++i) {
        const auto& a = agg[i];
        out << a.dataset << ',' << a.explainer << ',' << counts[i] << ',' << a.fidelity << ',' << a.e_size << ','
            << a.sparsity << ',' << a.delta_mae << '\n';
    }
}

}  // namespace cgt
