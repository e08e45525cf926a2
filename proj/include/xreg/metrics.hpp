#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xreg/gaussian.hpp"
#include "xreg/matrix.hpp"
#include "xreg/optim.hpp"
#include "xreg/rng.hpp"

namespace xreg {

enum class MetricKind { accuracy, loss };

/// Generalization gap with overfitting positive: train - test for accuracy,
/// test - train for losses.
inline double gen_gap(double train_metric, double test_metric, MetricKind kind) {
    return kind == MetricKind::accuracy ? train_metric - test_metric
                                        : test_metric - train_metric;
}

struct CalibrationBin {
    double lo = 0, hi = 0;
    double mean_conf = 0;
    double accuracy = 0;
    std::size_t count = 0;
};

struct CalibrationReport {
    std::vector<CalibrationBin> bins;
    double ece = 0;

    void write_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("CalibrationReport: cannot write " + path);
        f << "bin_low,bin_high,mean_conf,accuracy,count\n";
        for (const auto& b : bins)
            f << format_double(b.lo) << ',' << format_double(b.hi) << ','
              << format_double(b.mean_conf) << ',' << format_double(b.accuracy) << ','
              << b.count << "\n";
        f << "ece,,,," << format_double(ece) << "\n";
    }
};

/// Expected calibration error over equal-width confidence bins on the
/// max-probability prediction. Rows of `probs` must sum to 1.
inline CalibrationReport ece(const Matrix& probs, const Vec& labels, std::size_t n_bins = 15) {
    if (probs.rows == 0) throw std::invalid_argument("ece: empty input");
    if (probs.rows != labels.size()) throw std::invalid_argument("ece: size mismatch");
    for (std::size_t i = 0; i < probs.rows; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < probs.cols; ++j) s += probs(i, j);
        if (std::abs(s - 1.0) > 1e-6)
            throw std::invalid_argument("ece: probability rows must sum to 1");
    }
    CalibrationReport rep;
    rep.bins.resize(n_bins);
    std::vector<double> conf_sum(n_bins, 0.0), acc_sum(n_bins, 0.0);
    std::vector<std::size_t> count(n_bins, 0);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < probs.cols; ++j)
            if (probs(i, j) > probs(i, arg)) arg = j;
        const double conf = probs(i, arg);
        auto b = static_cast<std::size_t>(conf * static_cast<double>(n_bins));
        if (b >= n_bins) b = n_bins - 1;
        conf_sum[b] += conf;
        acc_sum[b] += (arg == static_cast<std::size_t>(labels[i])) ? 1.0 : 0.0;
        ++count[b];
    }
    const double n = static_cast<double>(probs.rows);
    for (std::size_t b = 0; b < n_bins; ++b) {
        auto& bin = rep.bins[b];
        bin.lo = static_cast<double>(b) / static_cast<double>(n_bins);
        bin.hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
        bin.count = count[b];
        if (count[b] == 0) continue;
        bin.mean_conf = conf_sum[b] / static_cast<double>(count[b]);
        bin.accuracy = acc_sum[b] / static_cast<double>(count[b]);
        rep.ece += (static_cast<double>(count[b]) / n) * std::abs(bin.accuracy - bin.mean_conf);
    }
    return rep;
}

struct RateFit {
    std::vector<std::size_t> sizes;
    Vec errors; // mean squared error of the estimated sigma vs the population value
    double slope = 0;
};

/// Monte-Carlo estimate of how the learned noise scale converges to the
/// population optimum as the regularization set grows. For each size m the
/// univariate Gaussian task is solved (w fit on a fixed-size training set by
/// least squares, log sigma by gradient descent on the regularization-set
/// NLL); squared errors against sigma_true are averaged over `repeats`
/// independent draws, and the log-log slope across sizes is fitted.
inline RateFit stat_rate_sweep(const std::vector<std::size_t>& sizes, std::size_t repeats,
                               Rng& rng, double w_true = 1.5, double sigma_true = 0.8,
                               std::size_t n_train = 1000) {
    if (sizes.size() < 2)
        throw std::invalid_argument("stat_rate_sweep: need at least two sizes");
    if (repeats < 30) throw std::invalid_argument("stat_rate_sweep: need repeats >= 30");
    RateFit fit;
    fit.sizes = sizes;
    for (std::size_t si = 0; si < sizes.size(); ++si) {
        const std::size_t m = sizes[si];
        if (si > 0 && m <= sizes[si - 1])
            throw std::invalid_argument("stat_rate_sweep: sizes must increase");
        double total = 0;
        for (std::size_t rep = 0; rep < repeats; ++rep) {
            Rng r = rng.child(si * 100003 + rep);
            double sxx = 0, sxy = 0;
            for (std::size_t i = 0; i < n_train; ++i) {
                const double x = r.gauss();
                const double y = w_true * x + r.gauss(sigma_true);
                sxx += x * x;
                sxy += x * y;
            }
            const double w = sxy / sxx;
            Vec xv(m), yv(m);
            for (std::size_t i = 0; i < m; ++i) {
                xv[i] = r.gauss();
                yv[i] = w_true * xv[i] + r.gauss(sigma_true);
            }
            // alternating-scheme rho-update run to convergence on the reg set
            GaussianUnivariate g{w, 0.0};
            for (int it = 0; it < 200; ++it) {
                double grad = 0;
                for (std::size_t i = 0; i < m; ++i)
                    grad += gaussian_nll(g, xv[i], yv[i]).grad_log_sigma;
                g.log_sigma -= 0.1 * grad / static_cast<double>(m);
            }
            const double err = g.sigma() - sigma_true;
            total += err * err;
        }
        const double mean_err = total / static_cast<double>(repeats);
        if (mean_err <= 0.0) throw std::invalid_argument("stat_rate_sweep: degenerate errors");
        fit.errors.push_back(mean_err);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        const double x = std::log(static_cast<double>(sizes[i]));
        const double y = std::log(fit.errors[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return fit;
}

} // namespace xreg
