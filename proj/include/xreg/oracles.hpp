#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xreg/dataset.hpp"
#include "xreg/matrix.hpp"
#include "xreg/optim.hpp"
#include "xreg/spline_model.hpp"

namespace xreg {

/// Exhaustive lambda-grid cross-validation result; the ground truth the
/// cross-regularization runs are compared against.
struct GridResult {
    Vec lambdas;
    Vec val_losses;
    double best_lambda = 0;
    Vec best_weights;
    std::size_t best_index = 0;

    void write_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("GridResult: cannot write " + path);
        f << "lambda,val_loss\n";
        for (std::size_t i = 0; i < lambdas.size(); ++i)
            f << format_double(lambdas[i]) << ',' << format_double(val_losses[i]) << "\n";
    }
};

inline Vec log_grid(double lo, double hi, std::size_t n) {
    Vec g(n);
    const double llo = std::log10(lo), lhi = std::log10(hi);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = std::pow(10.0, llo + (lhi - llo) * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
    return g;
}

/// Closed-form ridge solution (X^T X + lambda I)^-1 X^T y via the SPD solver.
inline Vec ridge_solve(const Matrix& x, const Vec& y, double lambda) {
    if (lambda < 0) throw std::invalid_argument("ridge_solve: lambda must be >= 0");
    Matrix a = matmul_t_self(x);
    for (std::size_t i = 0; i < a.rows; ++i) a(i, i) += lambda;
    return solve_spd(a, tmatvec(x, y));
}

inline double val_mse(const Matrix& x, const Vec& y, const Vec& w) {
    Vec p = matvec(x, w);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = p[i] - y[i];
        s += r * r;
    }
    return s / static_cast<double>(y.size());
}

/// Fits ridge on the training partition for every lambda in the grid and
/// scores each on the regularization partition.
inline GridResult ridge_grid(const SplitDataset& data, const Vec& grid) {
    if (grid.empty()) throw std::invalid_argument("ridge_grid: empty grid");
    GridResult out;
    out.lambdas = grid;
    Matrix xtx = matmul_t_self(data.train.X);
    Vec xty = tmatvec(data.train.X, data.train.y);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Matrix a = xtx;
        for (std::size_t j = 0; j < a.rows; ++j) a(j, j) += grid[i];
        Vec w = solve_spd(a, xty);
        out.val_losses.push_back(val_mse(data.reg.X, data.reg.y, w));
        if (i == 0 || out.val_losses[i] < out.val_losses[out.best_index]) {
            out.best_index = i;
            out.best_lambda = grid[i];
            out.best_weights = std::move(w);
        }
    }
    return out;
}

inline Vec default_ridge_grid() { return log_grid(1e-3, 1e1, 1000); }

struct LassoResult {
    Vec w;
    bool converged = true;
    std::size_t iterations = 0;
};

/// Cyclic coordinate descent with soft thresholding for the objective
/// (1/(2n)) ||Xw - y||^2 + lambda ||w||_1, iterated until the largest
/// coordinate change falls below tol.
inline LassoResult lasso_cd(const Matrix& x, const Vec& y, double lambda, double tol = 1e-8,
                            std::size_t max_iter = 100000) {
    if (tol <= 0) throw std::invalid_argument("lasso_cd: tol must be positive");
    const std::size_t n = x.rows, p = x.cols;
    const double nd = static_cast<double>(n);
    LassoResult res;
    res.w.assign(p, 0.0);
    Vec col_sq(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t i = 0; i < n; ++i) col_sq[j] += x(i, j) * x(i, j);
        col_sq[j] /= nd;
    }
    Vec resid = y; // y - Xw, starts at y for w = 0
    for (std::size_t it = 0; it < max_iter; ++it) {
        double max_delta = 0;
        for (std::size_t j = 0; j < p; ++j) {
            if (col_sq[j] == 0.0) continue;
            double corr = 0;
            for (std::size_t i = 0; i < n; ++i) corr += x(i, j) * resid[i];
            corr = corr / nd + col_sq[j] * res.w[j];
            const double wj =
                (corr > lambda ? corr - lambda : (corr < -lambda ? corr + lambda : 0.0)) /
                col_sq[j];
            const double d = wj - res.w[j];
            if (d != 0.0) {
                for (std::size_t i = 0; i < n; ++i) resid[i] -= d * x(i, j);
                res.w[j] = wj;
                max_delta = std::max(max_delta, std::abs(d));
            }
        }
        res.iterations = it + 1;
        if (max_delta < tol) return res;
    }
    res.converged = false;
    return res;
}

inline GridResult lasso_grid(const SplitDataset& data, const Vec& grid, double tol = 1e-8,
                             std::size_t max_iter = 100000) {
    if (grid.empty()) throw std::invalid_argument("lasso_grid: empty grid");
    GridResult out;
    out.lambdas = grid;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        LassoResult r = lasso_cd(data.train.X, data.train.y, grid[i], tol, max_iter);
        out.val_losses.push_back(val_mse(data.reg.X, data.reg.y, r.w));
        if (i == 0 || out.val_losses[i] < out.val_losses[out.best_index]) {
            out.best_index = i;
            out.best_lambda = grid[i];
            out.best_weights = std::move(r.w);
        }
    }
    return out;
}

inline Vec default_lasso_grid() { return log_grid(std::pow(10.0, -2.5), 1.0, 50); }

/// Penalized-spline closed form: beta = (B^T B + lambda D^T D)^-1 B^T y per
/// grid point, scored on the regularization partition. x-values must already
/// be mapped to [0,1]; designs are built once.
inline GridResult spline_grid(const SplitDataset& data, std::size_t n_knots, const Vec& grid) {
    if (grid.empty()) throw std::invalid_argument("spline_grid: empty grid");
    Vec x_train(data.train.size()), x_reg(data.reg.size());
    for (std::size_t i = 0; i < x_train.size(); ++i) x_train[i] = data.train.X(i, 0);
    for (std::size_t i = 0; i < x_reg.size(); ++i) x_reg[i] = data.reg.X(i, 0);
    Matrix b_train = bspline_design(x_train, n_knots);
    Matrix b_reg = bspline_design(x_reg, n_knots);
    Matrix d = second_diff_matrix(b_train.cols);
    Matrix btb = matmul_t_self(b_train);
    Matrix dtd = matmul_t_self(d);
    Vec bty = tmatvec(b_train, data.train.y);

    GridResult out;
    out.lambdas = grid;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Matrix a = btb;
        emap(a) += grid[i] * emap(dtd);
        for (std::size_t j = 0; j < a.rows; ++j) a(j, j) += 1e-10; // basis gaps
        Vec beta = solve_spd(a, bty);
        out.val_losses.push_back(val_mse(b_reg, data.reg.y, beta));
        if (i == 0 || out.val_losses[i] < out.val_losses[out.best_index]) {
            out.best_index = i;
            out.best_lambda = grid[i];
            out.best_weights = std::move(beta);
        }
    }
    return out;
}

inline Vec default_spline_grid() { return log_grid(1e-6, 1e2, 60); }

} // namespace xreg
