#include "cgt/train.hpp"

#include "cgt/error.hpp"
#include "cgt/rng.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace cgt {

Adam::Adam(std::vector<Tensor> params, const TrainConfig& config)
    : params_(std::move(params)),
      lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.epsilon) {
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        if (!p.has_grad()) continue;
        const auto g = p.grad();
        auto w = p.data_mut();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::vector<Tensor> predict(const Model& model, const GraphSpec& graph, const std::vector<FlowWindow>& windows,
                            const ForwardOptions& options) {
    NoGradGuard guard;
    std::vector<Tensor> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(forward(model, graph, w.x, options));
    return out;
}

double evaluate_mse(const Model& model, const GraphSpec& graph, const std::vector<FlowWindow>& windows) {
    if (windows.empty()) throw ContractError("evaluate_mse: no windows");
    NoGradGuard guard;
    double total = 0.0;
    for (const auto& w : windows) total += mse(forward(model, graph, w.x), w.y).item();
    return total / static_cast<double>(windows.size());
}

TrainResult train(const Model& init, const DatasetBundle& bundle, const TrainConfig& config) {
    if (bundle.train.empty()) throw ConfigError("train: training split has no windows");
    if (config.batch_size == 0) throw ConfigError("train: batch_size must be positive");
    const auto& val = bundle.val.empty() ? bundle.train : bundle.val;
    Model model = init.clone();
    model.set_trainable(true);
    std::vector<Tensor> params;
    for (const auto& p : model.parameters()) params.push_back(p.tensor);
    Adam adam(params, config);
    Rng rng(config.seed);

    TrainResult result{model.clone(), {}, 0, evaluate_mse(model, bundle.graph, val)};
    result.initial_val_loss = result.best_val_loss;

    std::vector<std::size_t> order(bundle.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        const std::size_t count =
            config.windows_per_epoch == 0 ? order.size() : std::min(order.size(), config.windows_per_epoch);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < count; start += config.batch_size) {
            const std::size_t end = std::min(count, start + config.batch_size);
            adam.zero_grad();
            Tensor loss;
            for (std::size_t i = start; i < end; ++i) {
                const auto& w = bundle.train[order[i]];
                Tensor l = mse(forward(model, bundle.graph, w.x), w.y);
                loss = loss.defined() ? add(loss, l) : l;
            }
            loss = scale(loss, 1.0 / static_cast<double>(end - start));
            ++step;
            if (!std::isfinite(loss.item())) {
                throw NumericalError("train: loss diverged (seed " + std::to_string(config.seed) + ", step " +
                                     std::to_string(step) + ")");
            }
            backward(loss);
            adam.step();
            epoch_loss += loss.item() * static_cast<double>(end - start);
        }
        const double val_loss = evaluate_mse(model, bundle.graph, val);
        result.curve.push_back({epoch, epoch_loss / static_cast<double>(count), val_loss});
        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.model = model.clone();
        }
    }
    return result;
}

void write_curve_csv(const std::vector<EpochRecord>& curve, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    os.precision(17);
    os << "epoch,train_loss,val_loss\n";
    for (const auto& r : curve) os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
}

}  // namespace cgt
