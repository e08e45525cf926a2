#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xreg/matrix.hpp"

namespace xreg {

enum class OptKind { sgd, momentum, adam };

struct OptimizerSpec {
    OptKind kind = OptKind::sgd;
    double mu = 0.9;      // momentum coefficient
    double beta1 = 0.9;   // adam
    double beta2 = 0.999; // adam
    double eps = 1e-8;    // adam

    static OptimizerSpec sgd() { return {OptKind::sgd}; }
    static OptimizerSpec with_momentum(double mu) { return {OptKind::momentum, mu}; }
    static OptimizerSpec adam(double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
        OptimizerSpec s{OptKind::adam};
        s.beta1 = b1;
        s.beta2 = b2;
        s.eps = eps;
        return s;
    }

    std::string name() const {
        switch (kind) {
            case OptKind::sgd: return "sgd";
            case OptKind::momentum: return "momentum";
            case OptKind::adam: return "adam";
        }
        return "?";
    }
};

/// Update state for one parameter vector. Non-finite gradients abort with the
/// step index; momenta persist across calls.
class Optimizer {
public:
    explicit Optimizer(OptimizerSpec spec = {}) : spec_(spec) {}

    const OptimizerSpec& spec() const { return spec_; }
    Vec& velocity() { return m_; }

    void step(Vec& p, const Vec& g, double lr) {
        if (p.size() != g.size()) throw std::invalid_argument("optimizer: shape mismatch");
        ensure(p.size());
        ++t_;
        for (double gv : g)
            if (!std::isfinite(gv))
                throw std::runtime_error("optimizer: non-finite gradient at step " +
                                         std::to_string(t_));
        switch (spec_.kind) {
            case OptKind::sgd:
                for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
                break;
            case OptKind::momentum:
                for (std::size_t i = 0; i < p.size(); ++i) {
                    m_[i] = spec_.mu * m_[i] + g[i];
                    p[i] -= lr * m_[i];
                }
                break;
            case OptKind::adam: {
                const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
                const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
                for (std::size_t i = 0; i < p.size(); ++i) {
                    m_[i] = spec_.beta1 * m_[i] + (1.0 - spec_.beta1) * g[i];
                    v_[i] = spec_.beta2 * v_[i] + (1.0 - spec_.beta2) * g[i] * g[i];
                    p[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + spec_.eps);
                }
                break;
            }
        }
    }

    void step_scalar(double& p, double g, double lr) {
        Vec pv{p}, gv{g};
        step(pv, gv, lr);
        p = pv[0];
    }

private:
    void ensure(std::size_t n) {
        if (m_.size() != n) {
            m_.assign(n, 0.0);
            v_.assign(n, 0.0);
        }
    }
    OptimizerSpec spec_;
    Vec m_, v_;
    std::uint64_t t_ = 0;
};

struct TrainConfig {
    double lr_theta = 1e-4;
    double lr_rho = 1e-1;
    std::size_t reg_interval = 30; // rho update every r theta-steps
    std::size_t mc_samples = 3;    // K
    std::size_t epochs = 100;
    std::size_t batch_size = 512;
    OptimizerSpec optimizer = OptimizerSpec::adam();
    std::size_t reg_start_step = 0;
    std::uint64_t seed = 1;
    double log_sigma_init = -3.0;
    double abort_loss = 1e6;

    void validate() const {
        if (reg_interval < 1) throw std::invalid_argument("config: reg_interval must be >= 1");
        if (mc_samples < 1) throw std::invalid_argument("config: mc_samples must be >= 1");
        if (lr_theta <= 0 || lr_rho < 0) throw std::invalid_argument("config: rates invalid");
        if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    }
};

struct RunRow {
    std::size_t epoch = 0;
    double train_loss = 0;
    double reg_loss = 0;
    double test_metric = 0;
    double gen_gap = 0;
    Vec rho; // regularization-parameter snapshot
};

/// 64-bit FNV-1a over a canonical "key=value\n" listing; the seed key is
/// excluded so runs of one config at different seeds share a hash.
inline std::uint64_t config_hash(const std::map<std::string, std::string>& cfg) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [k, v] : cfg) {
        if (k == "seed") continue;
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    return h;
}

inline std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

/// Per-epoch trace of one training run plus the config echo that produced it.
struct RunRecord {
    std::vector<RunRow> rows;
    std::map<std::string, std::string> config;
    std::uint64_t seed = 0;
    double wall_time_sec = 0;
    bool aborted = false;
    std::string abort_reason;

    std::uint64_t hash() const { return config_hash(config); }

    void write_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("RunRecord: cannot write " + path);
        f << "# config_hash=" << std::hex << hash() << std::dec << " seed=" << seed << "\n";
        for (const auto& [k, v] : config) f << "# " << k << "=" << v << "\n";
        if (aborted) f << "# aborted=" << abort_reason << "\n";
        const std::size_t k = rows.empty() ? 0 : rows.front().rho.size();
        f << "epoch,train_loss,reg_loss,test_metric,gen_gap";
        for (std::size_t i = 0; i < k; ++i) f << ",rho_" << i;
        f << "\n";
        for (const RunRow& r : rows) {
            f << r.epoch << ',' << format_double(r.train_loss) << ','
              << format_double(r.reg_loss) << ',' << format_double(r.test_metric) << ','
              << format_double(r.gen_gap);
            for (double v : r.rho) f << ',' << format_double(v);
            f << "\n";
        }
    }

    std::string to_json() const;
    void write_json(const std::string& path) const;
};

} // namespace xreg

#include <json.hpp>

namespace xreg {

inline std::string RunRecord::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    std::ostringstream hs;
    hs << std::hex << hash();
    j["config_hash"] = hs.str();
    j["config"] = config;
    j["wall_time_sec"] = wall_time_sec;
    j["aborted"] = aborted;
    if (aborted) j["abort_reason"] = abort_reason;
    nlohmann::json rows_j = nlohmann::json::array();
    for (const RunRow& r : rows) {
        nlohmann::json row;
        row["epoch"] = r.epoch;
        row["train_loss"] = r.train_loss;
        row["reg_loss"] = r.reg_loss;
        row["test_metric"] = r.test_metric;
        row["gen_gap"] = r.gen_gap;
        row["rho"] = r.rho;
        rows_j.push_back(std::move(row));
    }
    j["rows"] = std::move(rows_j);
    return j.dump(2);
}

inline void RunRecord::write_json(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("RunRecord: cannot write " + path);
    f << to_json() << "\n";
}

/// Least-squares slope of log(error) over the trailing window of the trace,
/// reported as the per-step contraction factor exp(slope).
inline double measure_convergence(const Vec& errors, double window_frac = 0.8) {
    if (errors.size() < 20)
        throw std::invalid_argument("measure_convergence: need >= 20 error values");
    for (double e : errors)
        if (!(e > 0.0)) throw std::invalid_argument("measure_convergence: errors must be positive");
    const auto start = static_cast<std::size_t>(
        std::floor(static_cast<double>(errors.size()) * (1.0 - window_frac)));
    const std::size_t n = errors.size() - start;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i);
        const double y = std::log(errors[start + i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double nd = static_cast<double>(n);
    const double denom = nd * sxx - sx * sx;
    if (denom == 0.0) return 1.0;
    const double slope = (nd * sxy - sx * sy) / denom;
    return std::exp(slope);
}

} // namespace xreg
