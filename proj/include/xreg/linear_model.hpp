#pragma once

#include <cmath>
#include <stdexcept>

#include "xreg/dataset.hpp"
#include "xreg/matrix.hpp"

namespace xreg {

constexpr double kRhoMin = 1e-8;

/// Linear model in magnitude-direction form: w = rho * theta with
/// ||theta||_2 = 1 and rho >= kRhoMin. The norm is the explicit complexity
/// parameter; the unit direction carries the features.
struct LinearReparam {
    double rho = 1.0;
    Vec theta;
    double bias = 0.0;
    bool use_bias = false;

    static LinearReparam from_weights(const Vec& w, double bias = 0.0, bool use_bias = false) {
        LinearReparam m;
        m.rho = std::max(norm2(w), kRhoMin);
        m.theta = w;
        scale(m.theta, 1.0 / m.rho);
        m.bias = bias;
        m.use_bias = use_bias;
        return m;
    }

    Vec weights() const {
        Vec w = theta;
        scale(w, rho);
        return w;
    }

    void renormalize() {
        const double n = norm2(theta);
        if (n == 0.0) throw std::runtime_error("LinearReparam: zero direction");
        scale(theta, 1.0 / n);
    }

    void clamp_rho() { rho = std::max(rho, kRhoMin); }
};

inline Vec linear_forward(const LinearReparam& m, const Matrix& x) {
    Vec p = matvec(x, m.theta);
    scale(p, m.rho);
    if (m.use_bias)
        for (double& v : p) v += m.bias;
    return p;
}

inline double linear_mse(const LinearReparam& m, const Matrix& x, const Vec& y) {
    Vec p = linear_forward(m, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = p[i] - y[i];
        s += r * r;
    }
    return s / static_cast<double>(y.size());
}

struct LinearGrads {
    Vec grad_theta_tangent; // d MSE / d theta, projected onto the unit-sphere tangent
    double grad_rho;        // d MSE / d rho
};

/// Gradients of the mean squared error under the (rho, theta) parameterization.
/// grad_theta_tangent has its component along theta removed, so updates move
/// on the sphere; grad_rho is the plain partial derivative.
inline LinearGrads linear_grads(const LinearReparam& m, const Matrix& x, const Vec& y) {
    const double n = static_cast<double>(y.size());
    Vec resid = linear_forward(m, x);
    for (std::size_t i = 0; i < y.size(); ++i) resid[i] -= y[i];
    Vec xtr = tmatvec(x, resid); // X^T r
    LinearGrads g;
    g.grad_rho = 2.0 / n * dot(xtr, m.theta);
    g.grad_theta_tangent = xtr;
    scale(g.grad_theta_tangent, 2.0 * m.rho / n);
    const double along = dot(g.grad_theta_tangent, m.theta);
    axpy(-along, m.theta, g.grad_theta_tangent);
    return g;
}

} // namespace xreg
