#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "xreg/matrix.hpp"
#include "xreg/rng.hpp"

namespace xreg {

/// Orthogonal decomposition of a gradient against a regularizer's
/// characteristic direction: g = g_rho + g_perp with g_rho parallel to the
/// direction and g_perp in its complement.
struct GradSplit {
    Vec g_rho;
    Vec g_perp;
};

/// Projects g onto the normalized direction u_raw. Empty optional signals a
/// degenerate (zero) direction; callers skip the rho-step for that round.
inline std::optional<GradSplit> project(const Vec& g, const Vec& u_raw) {
    const double nu = norm2(u_raw);
    if (nu == 0.0) return std::nullopt;
    GradSplit s;
    s.g_rho.assign(g.size(), 0.0);
    const double coef = dot(g, u_raw) / (nu * nu);
    s.g_perp = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
        s.g_rho[i] = coef * u_raw[i];
        s.g_perp[i] -= s.g_rho[i];
    }
    return s;
}

/// Characteristic direction of the L1 penalty: sign(w)/||sign(w)||_2, with
/// sign(0) = 0 so zeroed coordinates receive no complexity push.
inline std::optional<Vec> l1_direction(const Vec& w) {
    Vec s(w.size());
    double nsq = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        s[i] = (w[i] > 0.0) ? 1.0 : (w[i] < 0.0 ? -1.0 : 0.0);
        nsq += s[i] * s[i];
    }
    if (nsq == 0.0) return std::nullopt;
    scale(s, 1.0 / std::sqrt(nsq));
    return s;
}

/// Characteristic direction of the squared-derivative penalty |D beta|^2:
/// normalized D^T D beta. Degenerate when beta lies in the null space of D
/// (constant and linear coefficient profiles).
inline std::optional<Vec> deriv_norm_direction(const Vec& beta, const Matrix& d) {
    Vec db = matvec(d, beta);
    Vec dtd_beta = tmatvec(d, db);
    const double n = norm2(dtd_beta);
    if (n < 1e-12) return std::nullopt;
    scale(dtd_beta, 1.0 / n);
    return dtd_beta;
}

/// Circular shift by a real offset with linear interpolation between
/// neighboring indices. Integer s is an exact permutation; positive s moves
/// content toward higher indices. d_out/d_s uses the within-cell derivative
/// (the right-derivative convention at integer s).
struct ShiftResult {
    Vec out;
    Vec dout_ds;
};

inline ShiftResult shift1d(const Vec& x, double s) {
    const std::size_t L = x.size();
    if (L < 2) throw std::invalid_argument("shift1d: need length >= 2");
    ShiftResult r;
    r.out.resize(L);
    r.dout_ds.resize(L);
    const double Ld = static_cast<double>(L);
    for (std::size_t j = 0; j < L; ++j) {
        double t = static_cast<double>(j) - s;
        t -= Ld * std::floor(t / Ld); // into [0, L)
        auto k = static_cast<std::size_t>(t);
        if (k >= L) k = 0; // guards the t==L rounding edge
        const double f = t - static_cast<double>(k);
        const std::size_t k1 = (k + 1) % L;
        r.out[j] = (1.0 - f) * x[k] + f * x[k1];
        r.dout_ds[j] = x[k] - x[k1];
    }
    return r;
}

/// Learnable magnitudes of the augmentation family (here: a single circular
/// shift amplitude in index units).
struct AugmentParams {
    double alpha = 0.0;     // max shift
    double alpha_max = 8.0; // clamp bound
};

struct AugmentSample {
    Vec out;
    double u;        // the frozen U[-1,1] draw
    Vec dout_dalpha; // = u * dshift/ds
};

/// Draw u ~ U[-1,1] and apply shift1d(x, alpha*u). The reparameterization
/// keeps a gradient path to alpha: d out/d alpha = u * d shift/d s.
inline AugmentSample augment_sample(const Vec& x, const AugmentParams& p, Rng& rng) {
    if (p.alpha < 0.0) throw std::invalid_argument("augment_sample: alpha must be >= 0");
    AugmentSample a;
    a.u = rng.uniform(-1.0, 1.0);
    ShiftResult s = shift1d(x, p.alpha * a.u);
    a.out = std::move(s.out);
    a.dout_dalpha = std::move(s.dout_ds);
    scale(a.dout_dalpha, a.u);
    return a;
}

} // namespace xreg
