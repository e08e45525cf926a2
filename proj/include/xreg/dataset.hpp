#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xreg/matrix.hpp"
#include "xreg/rng.hpp"

namespace xreg {

enum class Task { regression, classification };

/// Which partition access was for; trainers tag every batch draw / loss pass
/// so tests can assert the train/reg isolation contract.
enum class Access { theta_update, rho_update, eval };

struct AccessCounts {
    std::uint64_t theta_update = 0;
    std::uint64_t rho_update = 0;
    std::uint64_t eval = 0;
};

struct Dataset {
    Matrix X;
    Vec y; // regression targets, or class labels stored as doubles
    Task task = Task::regression;
    mutable AccessCounts counts;

    std::size_t size() const { return X.rows; }
    std::size_t features() const { return X.cols; }
    int label(std::size_t i) const { return static_cast<int>(y[i]); }

    void note_access(Access a) const {
        switch (a) {
            case Access::theta_update: ++counts.theta_update; break;
            case Access::rho_update: ++counts.rho_update; break;
            case Access::eval: ++counts.eval; break;
        }
    }
};

struct SplitDataset {
    Dataset train;
    Dataset reg; // held-out regularization set
    Dataset test;
    double frac_train = 0, frac_reg = 0, frac_test = 0;
};

/// Correlated-groups regression data. n_base independent standard-normal
/// features; the remaining columns are round-robin copies of the bases plus
/// N(0, noise_sd^2). All features derived from one base share a coefficient,
/// and those group coefficients alternate +1/-1, so the predictive signal
/// lives in the well-conditioned group-mean directions while the copies make
/// X^T X ill-conditioned.
struct CorrelatedData {
    Dataset ds;
    Vec w_true;
};

inline CorrelatedData gen_correlated(std::size_t n_base, std::size_t n_total,
                                     double noise_sd, std::size_t n_samples, Rng& rng,
                                     double y_noise_sd = 0.5) {
    if (n_total < n_base || n_base < 1)
        throw std::invalid_argument("gen_correlated: need n_total >= n_base >= 1");
    Matrix base(n_samples, n_base);
    for (double& v : base.data) v = rng.gauss();
    Matrix x(n_samples, n_total);
    Vec w_true(n_total);
    for (std::size_t j = 0; j < n_total; ++j) {
        const std::size_t g = j % n_base;
        const bool is_copy = j >= n_base;
        for (std::size_t i = 0; i < n_samples; ++i)
            x(i, j) = base(i, g) + (is_copy ? rng.gauss(noise_sd) : 0.0);
        w_true[j] = (g % 2 == 0) ? 1.0 : -1.0;
    }
    Vec y = matvec(x, w_true);
    for (double& v : y) v += rng.gauss(y_noise_sd);
    CorrelatedData out;
    out.ds = Dataset{std::move(x), std::move(y), Task::regression, {}};
    out.w_true = std::move(w_true);
    return out;
}

/// Noiseless mean of the spline target.
inline double spline_mean(double x) {
    constexpr double pi = 3.14159265358979323846;
    return std::sin(2.0 * pi * x) + 0.5 * std::sin(8.0 * pi * x);
}

/// 1-D regression with heteroskedastic noise and a gap: x in [0,1] minus
/// (0.55, 0.7), y = sin(2*pi*x) + 0.5*sin(8*pi*x) + N(0, ((0.5+x)*0.3)^2).
inline Dataset gen_spline(std::size_t n_points, Rng& rng) {
    if (n_points < 4) throw std::invalid_argument("gen_spline: need n_points >= 4");
    Matrix x(n_points, 1);
    Vec y(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        double xi = rng.uniform();
        while (xi > 0.55 && xi < 0.7) xi = rng.uniform();
        x(i, 0) = xi;
        y[i] = spline_mean(xi) + rng.gauss((0.5 + xi) * 0.3);
    }
    return Dataset{std::move(x), std::move(y), Task::regression, {}};
}

/// Gaussian blobs at radius sep on a circle in 2-D; a label_noise fraction of
/// labels is resampled uniformly.
inline Dataset gen_blobs(std::size_t n_classes, std::size_t n_samples, double sep,
                         double label_noise, Rng& rng, double cluster_sd = 1.0) {
    if (n_classes < 2) throw std::invalid_argument("gen_blobs: need n_classes >= 2");
    if (label_noise < 0.0 || label_noise >= 1.0)
        throw std::invalid_argument("gen_blobs: label_noise must be in [0, 1)");
    constexpr double two_pi = 6.283185307179586476925287;
    Matrix x(n_samples, 2);
    Vec y(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto c = rng.below(n_classes);
        const double ang = two_pi * static_cast<double>(c) / static_cast<double>(n_classes);
        x(i, 0) = sep * std::cos(ang) + rng.gauss(cluster_sd);
        x(i, 1) = sep * std::sin(ang) + rng.gauss(cluster_sd);
        y[i] = static_cast<double>(c);
    }
    for (std::size_t i = 0; i < n_samples; ++i)
        if (rng.uniform() < label_noise) y[i] = static_cast<double>(rng.below(n_classes));
    Dataset out{std::move(x), std::move(y), Task::classification, {}};
    return out;
}

/// Circular signals classified by bump width. Each sample is a Gaussian bump
/// of class-specific width at a uniformly random position on a ring of length
/// n_features, plus input noise. Class identity is invariant to circular
/// shifts, which is what the learnable-shift augmentation experiment needs.
inline Dataset gen_bumps(std::size_t n_classes, std::size_t n_samples,
                         std::size_t n_features, double x_noise, Rng& rng) {
    static const double widths[] = {0.6, 1.0, 1.6, 2.5, 4.0, 6.0};
    if (n_classes < 2 || n_classes > 6)
        throw std::invalid_argument("gen_bumps: supports 2..6 classes");
    const double L = static_cast<double>(n_features);
    Matrix x(n_samples, n_features);
    Vec y(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto c = rng.below(n_classes);
        const double pos = rng.uniform(0.0, L);
        const double w = widths[c];
        for (std::size_t j = 0; j < n_features; ++j) {
            double d = std::abs(static_cast<double>(j) - pos);
            d = std::min(d, L - d);
            x(i, j) = std::exp(-0.5 * (d / w) * (d / w)) + rng.gauss(x_noise);
        }
        y[i] = static_cast<double>(c);
    }
    return Dataset{std::move(x), std::move(y), Task::classification, {}};
}

struct StandardizeStats {
    Vec mean;
    Vec sd;
};

/// Zero-mean/unit-variance per feature column, in place. Returns the applied
/// constants so predictions can be mapped back.
inline StandardizeStats standardize_features(Dataset& ds) {
    StandardizeStats st;
    st.mean.resize(ds.features());
    st.sd.resize(ds.features());
    const double n = static_cast<double>(ds.size());
    for (std::size_t j = 0; j < ds.features(); ++j) {
        double m = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) m += ds.X(i, j);
        m /= n;
        double v = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const double d = ds.X(i, j) - m;
            v += d * d;
        }
        const double sd = std::sqrt(v / n);
        st.mean[j] = m;
        st.sd[j] = sd;
        if (sd == 0.0) continue;
        for (std::size_t i = 0; i < ds.size(); ++i) ds.X(i, j) = (ds.X(i, j) - m) / sd;
    }
    return st;
}

inline std::pair<double, double> standardize_target(Dataset& ds) {
    double m = 0;
    for (double v : ds.y) m += v;
    m /= static_cast<double>(ds.size());
    double var = 0;
    for (double v : ds.y) var += (v - m) * (v - m);
    const double sd = std::sqrt(var / static_cast<double>(ds.size()));
    if (sd > 0)
        for (double& v : ds.y) v = (v - m) / sd;
    return {m, sd};
}

/// CSV loader: UTF-8, comma separated, decimal-point floats, mandatory header
/// row, no quoting. Errors name the offending row/column.
inline Dataset load_csv(const std::string& path, const std::string& target_column,
                        bool standardize, StandardizeStats* stats_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    std::ptrdiff_t target_idx = -1;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == target_column) target_idx = static_cast<std::ptrdiff_t>(j);
    if (target_idx < 0)
        throw std::runtime_error("load_csv: target column '" + target_column +
                                 "' not found in " + path);
    std::vector<Vec> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Vec row;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            ++col;
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                row.push_back(v);
            } catch (const std::exception&) {
                throw std::runtime_error("load_csv: non-numeric cell at row " +
                                         std::to_string(lineno) + ", column " +
                                         std::to_string(col) + " in " + path);
            }
        }
        if (row.size() != header.size())
            throw std::runtime_error("load_csv: row " + std::to_string(lineno) +
                                     " has " + std::to_string(row.size()) +
                                     " cells, expected " + std::to_string(header.size()));
        rows.push_back(std::move(row));
    }
    const std::size_t n = rows.size();
    const std::size_t p = header.size() - 1;
    Matrix x(n, p);
    Vec y(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t jj = 0;
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (static_cast<std::ptrdiff_t>(j) == target_idx)
                y[i] = rows[i][j];
            else
                x(i, jj++) = rows[i][j];
        }
    }
    Dataset ds{std::move(x), std::move(y), Task::regression, {}};
    if (standardize) {
        auto st = standardize_features(ds);
        if (stats_out) *stats_out = std::move(st);
    }
    return ds;
}

inline Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& idx,
                         std::size_t lo, std::size_t hi) {
    Matrix x(hi - lo, ds.features());
    Vec y(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
        for (std::size_t j = 0; j < ds.features(); ++j) x(i - lo, j) = ds.X(idx[i], j);
        y[i - lo] = ds.y[idx[i]];
    }
    return Dataset{std::move(x), std::move(y), ds.task, {}};
}

/// Random permutation, then contiguous slices of sizes matching the fractions.
inline SplitDataset split(const Dataset& ds, double f_train, double f_reg, double f_test,
                          Rng& rng) {
    if (f_train <= 0 || f_reg <= 0 || f_test <= 0)
        throw std::invalid_argument("split: fractions must be positive");
    if (std::abs(f_train + f_reg + f_test - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");
    const std::size_t n = ds.size();
    const auto idx = rng.permutation(n);
    const auto n_train = static_cast<std::size_t>(std::llround(f_train * static_cast<double>(n)));
    const auto n_reg = static_cast<std::size_t>(std::llround(f_reg * static_cast<double>(n)));
    if (n_train == 0 || n_reg == 0 || n_train + n_reg >= n)
        throw std::invalid_argument("split: a partition would be empty");
    SplitDataset out;
    out.train = take_rows(ds, idx, 0, n_train);
    out.reg = take_rows(ds, idx, n_train, n_train + n_reg);
    out.test = take_rows(ds, idx, n_train + n_reg, n);
    out.frac_train = f_train;
    out.frac_reg = f_reg;
    out.frac_test = f_test;
    return out;
}

} // namespace xreg
