#pragma once

#include <cmath>
#include <stdexcept>

#include "xreg/matrix.hpp"

namespace xreg {

/// Cubic B-spline design matrix on an open-uniform knot vector over [0,1]
/// (degree-fold repeated endpoints, n_knots interior grid points). Cox-de Boor
/// recursion; rows form a partition of unity. Basis count = n_knots + degree - 1.
inline Matrix bspline_design(const Vec& x, std::size_t n_knots, std::size_t degree = 3) {
    if (n_knots < 2) throw std::invalid_argument("bspline_design: need >= 2 knots");
    const std::size_t n_basis = n_knots + degree - 1;
    Vec t;
    for (std::size_t i = 0; i < degree; ++i) t.push_back(0.0);
    for (std::size_t i = 0; i < n_knots; ++i)
        t.push_back(static_cast<double>(i) / static_cast<double>(n_knots - 1));
    for (std::size_t i = 0; i < degree; ++i) t.push_back(1.0);

    Matrix b(x.size(), n_basis);
    Vec n(t.size() - 1);
    for (std::size_t r = 0; r < x.size(); ++r) {
        double xv = x[r];
        if (xv < 0.0 || xv > 1.0)
            throw std::invalid_argument("bspline_design: x outside [0,1]");
        xv = std::min(xv, 1.0 - 1e-12); // right endpoint belongs to the last span
        for (std::size_t j = 0; j + 1 < t.size(); ++j)
            n[j] = (t[j] <= xv && xv < t[j + 1]) ? 1.0 : 0.0;
        for (std::size_t d = 1; d <= degree; ++d) {
            for (std::size_t j = 0; j + d + 1 < t.size(); ++j) {
                double left = 0.0, right = 0.0;
                if (t[j + d] != t[j]) left = (xv - t[j]) / (t[j + d] - t[j]) * n[j];
                if (t[j + d + 1] != t[j + 1])
                    right = (t[j + d + 1] - xv) / (t[j + d + 1] - t[j + 1]) * n[j + 1];
                n[j] = left + right;
            }
        }
        for (std::size_t j = 0; j < n_basis; ++j) b(r, j) = n[j];
    }
    return b;
}

/// Second-difference penalty matrix with stencil rows (1, -2, 1), scaled so
/// trace(D^T D) = n_basis.
inline Matrix second_diff_matrix(std::size_t n_basis) {
    if (n_basis < 3) throw std::invalid_argument("second_diff_matrix: need n_basis >= 3");
    Matrix d(n_basis - 2, n_basis);
    for (std::size_t i = 0; i + 2 < n_basis; ++i) {
        d(i, i) = 1.0;
        d(i, i + 1) = -2.0;
        d(i, i + 2) = 1.0;
    }
    double tr = 0.0;
    for (double v : d.data) tr += v * v; // trace(D^T D) = sum of squares
    const double s = std::sqrt(static_cast<double>(n_basis) / tr);
    for (double& v : d.data) v *= s;
    return d;
}

struct SplineModel {
    Vec beta;
    std::size_t n_knots = 15;
    std::size_t degree = 3;
    Matrix d; // second-difference penalty matrix

    static SplineModel make(std::size_t n_knots, std::size_t degree = 3) {
        SplineModel m;
        m.n_knots = n_knots;
        m.degree = degree;
        m.beta.assign(n_knots + degree - 1, 0.0);
        m.d = second_diff_matrix(m.beta.size());
        return m;
    }
};

} // namespace xreg
