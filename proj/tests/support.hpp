#pragma once

#include "cgt/rng.hpp"
#include "cgt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <functional>
#include <vector>

namespace cgt::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0, bool grad = false) {
    Tensor t(std::move(shape));
    for (double& v : t.data_mut()) v = rng.uniform(lo, hi);
    if (grad) t.set_requires_grad(true);
    return t;
}

// Largest |autodiff - central difference| / (|fd| + floor) over every entry
// of every leaf in `leaves`. `f` must build a fresh scalar from the leaves.
inline double max_fd_error(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double h = 1e-5,
                           double floor = 1e-8) {
    for (auto& l : leaves) l.zero_grad();
    backward(f());
    double worst = 0.0;
    for (auto& l : leaves) {
        const std::vector<double> analytic(l.grad().begin(), l.grad().end());
        for (std::size_t k = 0; k < l.size(); ++k) {
            const double orig = l.data()[k];
            double plus, minus;
            {
                NoGradGuard guard;
                l.data_mut()[k] = orig + h;
                plus = f().item();
                l.data_mut()[k] = orig - h;
                minus = f().item();
                l.data_mut()[k] = orig;
            }
            const double fd = (plus - minus) / (2.0 * h);
            worst = std::max(worst, std::abs(analytic[k] - fd) / (std::abs(fd) + floor));
        }
    }
    return worst;
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("cgt_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace cgt::test
