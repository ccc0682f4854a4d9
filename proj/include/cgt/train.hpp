#pragma once

#include "cgt/data.hpp"
#include "cgt/model.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cgt {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Windows drawn per epoch from the shuffled training split; 0 uses all.
    std::size_t windows_per_epoch = 256;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    Model model;  // parameters with the best validation MSE
    std::vector<EpochRecord> curve;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    double initial_val_loss = 0.0;
};

class Adam {
public:
    Adam(std::vector<Tensor> params, const TrainConfig& config);
    void step();
    void zero_grad();

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

// Minimizes MSE on bundle.train with Adam; keeps the best parameters on
// bundle.val. Throws NumericalError (with seed and step) on a non-finite loss.
TrainResult train(const Model& init, const DatasetBundle& bundle, const TrainConfig& config);

// Mean of per-window MSE, normalized units.
double evaluate_mse(const Model& model, const GraphSpec& graph, const std::vector<FlowWindow>& windows);

std::vector<Tensor> predict(const Model& model, const GraphSpec& graph, const std::vector<FlowWindow>& windows,
                            const ForwardOptions& options = {});

void write_curve_csv(const std::vector<EpochRecord>& curve, const std::filesystem::path& path);

}  // namespace cgt
