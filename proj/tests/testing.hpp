#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "hypernet/tensor.hpp"

namespace hn::testing {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, std::mt19937_64& gen, double lo = -1.0,
                        double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> uni(lo, hi);
    for (auto& v : t.data) v = static_cast<T>(uni(gen));
    return t;
}

struct GradCheckResult {
    double max_rel_err = 0;
    int checked = 0;
    bool ok(double tol) const { return checked > 0 && max_rel_err <= tol; }
};

// Central finite differences on a sample of coordinates of x against the
// analytic gradient. loss() must recompute the full forward from x.
inline GradCheckResult check_gradient(std::vector<double>& x, const std::vector<double>& analytic,
                                      const std::function<double()>& loss,
                                      std::mt19937_64& gen, double eps = 1e-4,
                                      int max_coords = 40, double skip_below = -1.0) {
    GradCheckResult res;
    std::vector<std::size_t> coords(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) coords[i] = i;
    if (static_cast<int>(coords.size()) > max_coords) {
        std::shuffle(coords.begin(), coords.end(), gen);
        coords.resize(max_coords);
    }
    for (std::size_t i : coords) {
        const double orig = x[i];
        x[i] = orig + eps;
        const double lp = loss();
        x[i] = orig - eps;
        const double lm = loss();
        x[i] = orig;
        const double fd = (lp - lm) / (2 * eps);
        if (skip_below > 0 && std::abs(fd) < skip_below && std::abs(analytic[i]) < skip_below)
            continue;
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
        res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - analytic[i]) / denom);
        ++res.checked;
    }
    return res;
}

template <typename T>
GradCheckResult check_gradient_tensor(Tensor<T>& x, const Tensor<T>& analytic,
                                      const std::function<double()>& loss, std::mt19937_64& gen,
                                      double eps = 1e-4, int max_coords = 40) {
    static_assert(std::is_same_v<T, double>, "gradient checks run at 64-bit precision");
    std::vector<double> grads(analytic.data.begin(), analytic.data.end());
    return check_gradient(x.data, grads, loss, gen, eps, max_coords);
}

// Fixed random projection turning a tensor-valued op into a scalar loss.
template <typename T>
Tensor<T> projection_like(const std::vector<int>& shape, std::uint64_t seed) {
    auto gen = rng(seed);
    return random_tensor<T>(shape, gen);
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

}  // namespace hn::testing
