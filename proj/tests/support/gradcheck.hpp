#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "weatherlpr/rng.hpp"
#include "weatherlpr/tensor.hpp"

namespace wlpr::testing {

inline constexpr double kGradStep = 1e-3;
inline constexpr double kGradTol = 1e-4;

/// Central differences of a scalar function with respect to every element
/// of `x`, which is perturbed in place and restored.
inline Tensor numeric_grad(const std::function<double()>& f, Tensor& x, double step = kGradStep) {
    Tensor g = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double up = f();
        x[i] = saved - step;
        const double down = f();
        x[i] = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||, floor). The floor keeps gradients that are
/// identically zero (e.g. a bias feeding batch norm) from turning rounding
/// noise into a relative error of 1.
inline double rel_error(const Tensor& a, const Tensor& b, double floor = 1e-6) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return std::sqrt(diff) / std::max(scale, floor);
}

inline Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor t(s);
    for (double& v : t.data()) v = rng.normal(0.0, scale);
    return t;
}

inline Tensor random_uniform(Shape s, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(s);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace wlpr::testing
