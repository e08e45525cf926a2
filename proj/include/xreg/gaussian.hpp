#pragma once

#include <cmath>
#include <stdexcept>

namespace xreg {

/// Univariate Gaussian regression model p(y|x) = N(w*x, sigma^2), with the
/// noise scale carried as log sigma.
struct GaussianUnivariate {
    double w = 0.0;
    double log_sigma = 0.0;

    double sigma() const { return std::exp(log_sigma); }
};

struct GaussianNll {
    double loss;
    double grad_w;
    double grad_log_sigma;
};

/// NLL = log sigma + (y - w x)^2 / (2 sigma^2) up to an additive constant,
/// with analytic gradients for w and log sigma.
inline GaussianNll gaussian_nll(const GaussianUnivariate& g, double x, double y) {
    const double sig = g.sigma();
    if (!(sig > 0.0)) throw std::invalid_argument("gaussian_nll: sigma must be positive");
    const double r = y - g.w * x;
    GaussianNll out;
    out.loss = g.log_sigma + r * r / (2.0 * sig * sig);
    out.grad_w = -r * x / (sig * sig);
    out.grad_log_sigma = 1.0 - r * r / (sig * sig);
    return out;
}

} // namespace xreg
