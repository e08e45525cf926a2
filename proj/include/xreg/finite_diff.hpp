#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace xreg {

/// Central-difference gradient estimate; the independent oracle every analytic
/// gradient in this library is checked against. Step per coordinate is
/// h * (1 + |x_i|), balancing truncation against f64 roundoff.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double hi = h * (1.0 + std::abs(x[i]));
        const double xi = x[i];
        x[i] = xi + hi;
        const double fp = f(x);
        x[i] = xi - hi;
        const double fm = f(x);
        x[i] = xi;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff: non-finite function value");
        g[i] = (fp - fm) / (2.0 * hi);
    }
    return g;
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-12);
}

/// Max relative component error between an analytic gradient and the
/// finite-difference estimate, with an absolute floor for near-zero entries.
inline double grad_rel_err(const std::vector<double>& analytic,
                           const std::vector<double>& numeric) {
    double scale = 0.0;
    for (double v : numeric) scale = std::max(scale, std::abs(v));
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(numeric[i]), 1e-8 * scale, 1e-12});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

} // namespace xreg
