#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "xreg/dataset.hpp"
#include "xreg/linear_model.hpp"
#include "xreg/matrix.hpp"
#include "xreg/metrics.hpp"
#include "xreg/mlp.hpp"
#include "xreg/optim.hpp"
#include "xreg/regops.hpp"
#include "xreg/rng.hpp"

namespace xreg {

namespace detail {

inline double design_mse(const Matrix& x, const Vec& y, const Vec& w) {
    Vec p = matvec(x, w);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = p[i] - y[i];
        s += r * r;
    }
    return s / static_cast<double>(y.size());
}

/// X^T (Xw - y) * 2/n
inline Vec design_mse_grad(const Matrix& x, const Vec& y, const Vec& w) {
    Vec r = matvec(x, w);
    for (std::size_t i = 0; i < y.size(); ++i) r[i] -= y[i];
    Vec g = tmatvec(x, r);
    scale(g, 2.0 / static_cast<double>(y.size()));
    return g;
}

inline std::vector<std::size_t> reg_batch_rows(std::size_t n_reg, std::size_t batch, Rng& rng) {
    // full reg set when it fits in a batch, else uniform with replacement
    std::vector<std::size_t> rows;
    if (n_reg <= batch) {
        rows.resize(n_reg);
        for (std::size_t i = 0; i < n_reg; ++i) rows[i] = i;
    } else {
        rows.resize(batch);
        for (std::size_t i = 0; i < batch; ++i) rows[i] = rng.below(n_reg);
    }
    return rows;
}

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline Timer make_timer() { return {}; }

} // namespace detail

/// Data-driven starting point for the reparameterized linear model: the
/// normalized least-squares direction X^T y and the training best-response
/// magnitude for it. Uses the training partition only.
inline void init_linear_data_driven(LinearReparam& m, const Dataset& train) {
    m.theta = tmatvec(train.X, train.y);
    const double n = norm2(m.theta);
    if (n == 0.0) {
        m.theta.assign(train.features(), 0.0);
        m.theta[0] = 1.0;
    } else {
        scale(m.theta, 1.0 / n);
    }
    Vec xt = matvec(train.X, m.theta);
    const double denom = dot(xt, xt);
    m.rho = denom > 0 ? std::max(dot(train.y, xt) / denom, kRhoMin) : 1.0;
}

/// Alternating optimization of the magnitude-direction linear model: theta
/// descends the training MSE (tangent step taken at the composed-weight scale,
/// then renormalized), rho descends the regularization-set MSE every
/// reg_interval steps once reg_start_step is reached.
inline RunRecord train_l2(LinearReparam& m, const SplitDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    auto timer = detail::make_timer();
    RunRecord rec;
    rec.seed = cfg.seed;
    Rng root(cfg.seed);
    Rng rng_data = root.child(0);
    Rng rng_reg = root.child(1);

    const Dataset& tr = data.train;
    const Dataset& rg = data.reg;
    const std::size_t n_tr = tr.size();
    const bool full_batch = cfg.batch_size >= n_tr;

    for (std::size_t step = 0; step < cfg.epochs; ++step) {
        tr.note_access(Access::theta_update);
        Vec g_w;
        double train_loss;
        if (full_batch) {
            Vec w = m.weights();
            g_w = detail::design_mse_grad(tr.X, tr.y, w);
            train_loss = detail::design_mse(tr.X, tr.y, w);
        } else {
            Matrix xb(cfg.batch_size, tr.features());
            Vec yb(cfg.batch_size);
            for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                const auto r = rng_data.below(n_tr);
                for (std::size_t j = 0; j < tr.features(); ++j) xb(i, j) = tr.X(r, j);
                yb[i] = tr.y[r];
            }
            Vec w = m.weights();
            g_w = detail::design_mse_grad(xb, yb, w);
            train_loss = detail::design_mse(xb, yb, w);
        }
        if (!std::isfinite(train_loss) || train_loss > cfg.abort_loss) {
            rec.aborted = true;
            rec.abort_reason = "train loss " + format_double(train_loss) + " at step " +
                               std::to_string(step);
            break;
        }
        const double along = dot(g_w, m.theta);
        axpy(-along, m.theta, g_w); // tangent component
        axpy(-cfg.lr_theta, g_w, m.theta);
        m.renormalize();

        if (step >= cfg.reg_start_step && (step - cfg.reg_start_step) % cfg.reg_interval == 0 &&
            cfg.lr_rho > 0) {
            rg.note_access(Access::rho_update);
            auto rows = detail::reg_batch_rows(rg.size(), cfg.batch_size, rng_reg);
            Vec xt(rows.size());
            double num = 0, den = 0;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                double dotv = 0;
                for (std::size_t j = 0; j < rg.features(); ++j)
                    dotv += rg.X(rows[i], j) * m.theta[j];
                xt[i] = dotv;
            }
            for (std::size_t i = 0; i < rows.size(); ++i) {
                num += (m.rho * xt[i] - rg.y[rows[i]]) * xt[i];
                den += 1.0;
            }
            const double g_rho = 2.0 * num / den;
            m.rho -= cfg.lr_rho * g_rho;
            m.clamp_rho();
        }

        tr.note_access(Access::eval);
        rg.note_access(Access::eval);
        data.test.note_access(Access::eval);
        RunRow row;
        row.epoch = step;
        row.train_loss = linear_mse(m, tr.X, tr.y);
        row.reg_loss = linear_mse(m, rg.X, rg.y);
        row.test_metric = linear_mse(m, data.test.X, data.test.y);
        row.gen_gap = gen_gap(row.train_loss, row.test_metric, MetricKind::loss);
        row.rho = {m.rho};
        rec.rows.push_back(std::move(row));
    }
    rec.wall_time_sec = timer.seconds();
    return rec;
}

enum class DirectionKind { l1, deriv_norm };

/// Linear-in-parameters problem for projected training: the model is
/// design * w, with per-partition design matrices and the datasets they came
/// from (kept for access accounting).
struct ProjectedProblem {
    const SplitDataset* src = nullptr;
    Matrix x_train, x_reg, x_test;
    const Vec *y_train = nullptr, *y_reg = nullptr, *y_test = nullptr;
    DirectionKind direction = DirectionKind::l1;
    const Matrix* d = nullptr; // second-difference matrix for deriv_norm

    static ProjectedProblem linear(const SplitDataset& s, DirectionKind dir) {
        ProjectedProblem p;
        p.src = &s;
        p.x_train = s.train.X;
        p.x_reg = s.reg.X;
        p.x_test = s.test.X;
        p.y_train = &s.train.y;
        p.y_reg = &s.reg.y;
        p.y_test = &s.test.y;
        p.direction = dir;
        return p;
    }

    std::optional<Vec> complexity_direction(const Vec& w) const {
        if (direction == DirectionKind::l1) return l1_direction(w);
        return deriv_norm_direction(w, *d);
    }
};

/// Gradient-decomposition training: every step the training gradient is
/// applied only through its component orthogonal to the current complexity
/// direction (momentum velocity is re-projected too, so no training motion
/// leaks along the direction); every reg_interval steps the regularization-set
/// gradient is applied only through its projection onto that direction.
inline RunRecord train_projected(Vec& w, const ProjectedProblem& p, const TrainConfig& cfg) {
    cfg.validate();
    auto timer = detail::make_timer();
    RunRecord rec;
    rec.seed = cfg.seed;
    Rng root(cfg.seed);
    Rng rng_data = root.child(0);
    Rng rng_reg = root.child(1);

    const std::size_t n_tr = p.y_train->size();
    const bool full_batch = cfg.batch_size >= n_tr;
    Optimizer opt(cfg.optimizer);
    std::size_t reg_steps = 0, degenerate_steps = 0;

    for (std::size_t step = 0; step < cfg.epochs; ++step) {
        p.src->train.note_access(Access::theta_update);
        Vec g;
        if (full_batch) {
            g = detail::design_mse_grad(p.x_train, *p.y_train, w);
        } else {
            Matrix xb(cfg.batch_size, p.x_train.cols);
            Vec yb(cfg.batch_size);
            for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                const auto r = rng_data.below(n_tr);
                for (std::size_t j = 0; j < p.x_train.cols; ++j) xb(i, j) = p.x_train(r, j);
                yb[i] = (*p.y_train)[r];
            }
            g = detail::design_mse_grad(xb, yb, w);
        }
        auto u = p.complexity_direction(w);
        if (u) {
            const double along = dot(g, *u);
            axpy(-along, *u, g);
        }
        opt.step(w, g, cfg.lr_theta);
        if (u && cfg.optimizer.kind == OptKind::momentum) {
            Vec& vel = opt.velocity();
            if (!vel.empty()) {
                const double along = dot(vel, *u);
                axpy(-along, *u, vel);
            }
        }

        if (step >= cfg.reg_start_step && (step - cfg.reg_start_step) % cfg.reg_interval == 0 &&
            cfg.lr_rho > 0) {
            ++reg_steps;
            auto u2 = p.complexity_direction(w);
            if (!u2) {
                ++degenerate_steps;
            } else {
                p.src->reg.note_access(Access::rho_update);
                auto rows = detail::reg_batch_rows(p.y_reg->size(), cfg.batch_size, rng_reg);
                Vec gv(w.size(), 0.0);
                for (std::size_t r : rows) {
                    double pred = 0;
                    for (std::size_t j = 0; j < w.size(); ++j) pred += p.x_reg(r, j) * w[j];
                    const double resid = pred - (*p.y_reg)[r];
                    for (std::size_t j = 0; j < w.size(); ++j) gv[j] += resid * p.x_reg(r, j);
                }
                scale(gv, 2.0 / static_cast<double>(rows.size()));
                const double along = dot(gv, *u2);
                axpy(-cfg.lr_rho * along, *u2, w);
            }
        }

        const double train_loss = detail::design_mse(p.x_train, *p.y_train, w);
        if (!std::isfinite(train_loss) || train_loss > cfg.abort_loss) {
            rec.aborted = true;
            rec.abort_reason = "train loss diverged at step " + std::to_string(step);
            break;
        }
        p.src->test.note_access(Access::eval);
        RunRow row;
        row.epoch = step;
        row.train_loss = train_loss;
        row.reg_loss = detail::design_mse(p.x_reg, *p.y_reg, w);
        row.test_metric = detail::design_mse(p.x_test, *p.y_test, w);
        row.gen_gap = gen_gap(row.train_loss, row.test_metric, MetricKind::loss);
        double complexity;
        if (p.direction == DirectionKind::l1) {
            complexity = 0;
            for (double v : w) complexity += std::abs(v);
        } else {
            Vec db = matvec(*p.d, w);
            complexity = dot(db, db);
        }
        row.rho = {complexity};
        rec.rows.push_back(std::move(row));
    }
    if (reg_steps > 0 && degenerate_steps * 2 > reg_steps) {
        rec.config["warning"] = "degenerate complexity direction on >50% of reg steps";
    }
    rec.wall_time_sec = timer.seconds();
    return rec;
}

/// Optional learnable input augmentation carried by the noisy trainer.
struct AugmentState {
    AugmentParams params;
    bool enabled = false;
};

namespace detail {

struct AugmentedBatch {
    Matrix x;
    Vec u;       // per-row U[-1,1] draws
    Matrix dxds; // per-row d x / d s
};

inline AugmentedBatch augment_batch(const Matrix& x, double alpha, Rng& rng) {
    AugmentedBatch out;
    out.x = Matrix(x.rows, x.cols);
    out.dxds = Matrix(x.rows, x.cols);
    out.u.resize(x.rows);
    Vec row(x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t j = 0; j < x.cols; ++j) row[j] = x(i, j);
        out.u[i] = rng.uniform(-1.0, 1.0);
        ShiftResult s = shift1d(row, alpha * out.u[i]);
        for (std::size_t j = 0; j < x.cols; ++j) {
            out.x(i, j) = s.out[j];
            out.dxds(i, j) = s.dout_ds[j];
        }
    }
    return out;
}

/// MC-averaged regularization loss with gradients for log_sigma and, when
/// augmenting, alpha. Each of the K samples draws its own noise (and shift).
struct RegStepGrads {
    double loss = 0;
    Vec log_sigma;
    double alpha = 0;
};

inline RegStepGrads mc_reg_grads(const NoisyMlp& m, const Matrix& x, const Vec& labels,
                                 std::size_t k, Rng& rng, const AugmentState& aug) {
    const std::size_t n = x.rows;
    std::vector<NoiseDraw> draws(k);
    std::vector<MlpCache> caches(k);
    std::vector<Matrix> probs(k);
    std::vector<AugmentedBatch> abatches;
    if (aug.enabled) abatches.resize(k);
    Matrix pbar(n, m.n_classes());
    for (std::size_t s = 0; s < k; ++s) {
        const Matrix* xin = &x;
        if (aug.enabled) {
            abatches[s] = augment_batch(x, aug.params.alpha, rng);
            xin = &abatches[s].x;
        }
        draws[s] = draw_noise(m, n, rng);
        mlp_forward(m, *xin, &draws[s], &caches[s]);
        probs[s] = caches[s].logits;
        softmax_rows(probs[s]);
        emap(pbar) += emap(probs[s]);
    }
    for (double& v : pbar.data) v /= static_cast<double>(k);

    RegStepGrads out;
    out.log_sigma.assign(m.log_sigma.size(), 0.0);
    Matrix dpbar(n, m.n_classes());
    for (std::size_t i = 0; i < n; ++i) {
        const auto yi = static_cast<std::size_t>(labels[i]);
        const double pi = std::max(pbar(i, yi), 1e-300);
        out.loss -= std::log(pi);
        dpbar(i, yi) = -1.0 / pi / static_cast<double>(n);
    }
    out.loss /= static_cast<double>(n);

    for (std::size_t s = 0; s < k; ++s) {
        const Matrix& p = probs[s];
        Matrix dlogits(n, m.n_classes());
        for (std::size_t i = 0; i < n; ++i) {
            double inner = 0;
            for (std::size_t j = 0; j < p.cols; ++j) inner += dpbar(i, j) * p(i, j);
            for (std::size_t j = 0; j < p.cols; ++j)
                dlogits(i, j) = p(i, j) * (dpbar(i, j) - inner) / static_cast<double>(k);
        }
        MlpGrads g = mlp_backward(m, caches[s], dlogits, &draws[s], aug.enabled);
        emap(out.log_sigma) += emap(g.log_sigma);
        if (aug.enabled) {
            const AugmentedBatch& ab = abatches[s];
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0;
                for (std::size_t j = 0; j < x.cols; ++j) acc += g.x(i, j) * ab.dxds(i, j);
                out.alpha += ab.u[i] * acc;
            }
        }
    }
    return out;
}

} // namespace detail

/// One epoch-indexed provider of the active training partition; train_growth
/// switches it at the transition epoch.
using TrainProvider = std::function<const Dataset&(std::size_t epoch)>;

inline RunRecord train_noisy_impl(NoisyMlp& m, const TrainProvider& train_at,
                                  const SplitDataset& data, const TrainConfig& cfg,
                                  AugmentState aug) {
    cfg.validate();
    auto timer = detail::make_timer();
    RunRecord rec;
    rec.seed = cfg.seed;
    Rng root(cfg.seed);
    Rng rng_data = root.child(0);
    Rng rng_noise = root.child(1);
    Rng rng_mc = root.child(2);

    bool sigma_live = cfg.lr_rho > 0;
    if (!sigma_live) {
        bool any = false;
        for (double ls : m.log_sigma) any = any || std::exp(ls) != 0.0;
        sigma_live = any; // fixed nonzero sigma still needs noise draws
    }
    const bool noise_machinery = sigma_live || aug.enabled;

    std::vector<Optimizer> opt_w;
    for (std::size_t l = 0; l < m.n_layers(); ++l) opt_w.emplace_back(cfg.optimizer);
    Optimizer opt_head(cfg.optimizer), opt_bias(cfg.optimizer), opt_rho(cfg.optimizer);

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Dataset& tr = train_at(epoch);
        const std::size_t n_tr = tr.size();
        const auto perm = rng_data.permutation(n_tr);
        double epoch_loss = 0;
        std::size_t n_batches = 0;
        double last_reg_loss = rec.rows.empty() ? 0.0 : rec.rows.back().reg_loss;

        for (std::size_t at = 0; at < n_tr; at += cfg.batch_size) {
            const std::size_t bs = std::min(cfg.batch_size, n_tr - at);
            tr.note_access(Access::theta_update);
            Matrix xb(bs, tr.features());
            Vec yb(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                for (std::size_t j = 0; j < tr.features(); ++j) xb(i, j) = tr.X(perm[at + i], j);
                yb[i] = tr.y[perm[at + i]];
            }
            if (aug.enabled) {
                auto ab = detail::augment_batch(xb, aug.params.alpha, rng_noise);
                xb = std::move(ab.x);
            }
            MlpCache cache;
            if (noise_machinery && sigma_live) {
                NoiseDraw eps = draw_noise(m, bs, rng_noise);
                mlp_forward(m, xb, &eps, &cache);
                CeResult ce = cross_entropy(cache.logits, yb);
                if (!std::isfinite(ce.loss) || ce.loss > cfg.abort_loss) {
                    rec.aborted = true;
                    rec.abort_reason = "train loss diverged at step " + std::to_string(step);
                    break;
                }
                epoch_loss += ce.loss;
                MlpGrads g = mlp_backward(m, cache, ce.dlogits, &eps);
                for (std::size_t l = 0; l < m.n_layers(); ++l)
                    opt_w[l].step(m.w[l].data, g.w[l].data, cfg.lr_theta);
                opt_head.step(m.w_head.data, g.w_head.data, cfg.lr_theta);
                opt_bias.step(m.b_head, g.b_head, cfg.lr_theta);
            } else {
                mlp_forward(m, xb, nullptr, &cache);
                CeResult ce = cross_entropy(cache.logits, yb);
                if (!std::isfinite(ce.loss) || ce.loss > cfg.abort_loss) {
                    rec.aborted = true;
                    rec.abort_reason = "train loss diverged at step " + std::to_string(step);
                    break;
                }
                epoch_loss += ce.loss;
                MlpGrads g = mlp_backward(m, cache, ce.dlogits, nullptr);
                for (std::size_t l = 0; l < m.n_layers(); ++l)
                    opt_w[l].step(m.w[l].data, g.w[l].data, cfg.lr_theta);
                opt_head.step(m.w_head.data, g.w_head.data, cfg.lr_theta);
                opt_bias.step(m.b_head, g.b_head, cfg.lr_theta);
            }
            ++n_batches;
            ++step;

            const bool do_reg = cfg.lr_rho > 0 && (sigma_live || aug.enabled) &&
                                step >= cfg.reg_start_step && step % cfg.reg_interval == 0;
            if (do_reg) {
                data.reg.note_access(Access::rho_update);
                auto rows = detail::reg_batch_rows(data.reg.size(), cfg.batch_size, rng_data);
                Matrix xr(rows.size(), data.reg.features());
                Vec yr(rows.size());
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    for (std::size_t j = 0; j < data.reg.features(); ++j)
                        xr(i, j) = data.reg.X(rows[i], j);
                    yr[i] = data.reg.y[rows[i]];
                }
                auto rg = detail::mc_reg_grads(m, xr, yr, cfg.mc_samples, rng_mc, aug);
                last_reg_loss = rg.loss;
                if (aug.enabled) {
                    Vec params = m.log_sigma;
                    params.push_back(aug.params.alpha);
                    Vec grads = rg.log_sigma;
                    grads.push_back(rg.alpha);
                    opt_rho.step(params, grads, cfg.lr_rho);
                    for (std::size_t l = 0; l < m.log_sigma.size(); ++l)
                        m.log_sigma[l] = std::min(params[l], kLogSigmaCap);
                    aug.params.alpha =
                        std::min(std::max(params.back(), 0.0), aug.params.alpha_max);
                } else {
                    opt_rho.step(m.log_sigma, rg.log_sigma, cfg.lr_rho);
                    for (double& ls : m.log_sigma) ls = std::min(ls, kLogSigmaCap);
                }
            }
        }
        if (rec.aborted) break;

        data.test.note_access(Access::eval);
        tr.note_access(Access::eval);
        RunRow row;
        row.epoch = epoch;
        row.train_loss = n_batches ? epoch_loss / static_cast<double>(n_batches) : 0.0;
        row.reg_loss = last_reg_loss;
        const double train_acc = mlp_accuracy(m, tr.X, tr.y);
        row.test_metric = mlp_accuracy(m, data.test.X, data.test.y);
        row.gen_gap = gen_gap(train_acc, row.test_metric, MetricKind::accuracy);
        for (double ls : m.log_sigma) row.rho.push_back(std::exp(ls));
        if (aug.enabled) row.rho.push_back(aug.params.alpha);
        rec.rows.push_back(std::move(row));
    }
    rec.wall_time_sec = timer.seconds();
    if (aug.enabled && !rec.rows.empty())
        rec.config["final_alpha"] = format_double(aug.params.alpha);
    return rec;
}

/// Algorithm-1 training of the noisy MLP: per training batch draw one noise
/// sample per layer and update the weights on the training loss; every
/// reg_interval steps draw a regularization batch and update the noise scales
/// (and the augmentation magnitude, when enabled) on the MC-averaged
/// regularization loss. Test metrics always use the deterministic forward.
inline RunRecord train_noisy(NoisyMlp& m, const SplitDataset& data, const TrainConfig& cfg,
                             std::optional<AugmentParams> augment = std::nullopt) {
    AugmentState aug;
    if (augment) {
        aug.params = *augment;
        aug.enabled = true;
    }
    return train_noisy_impl(
        m, [&data](std::size_t) -> const Dataset& { return data.train; }, data, cfg, aug);
}

/// The univariate stochastic-regularization example: w descends the training
/// NLL on the single pair (x_t, y_t) while log sigma descends the
/// regularization NLL on (x_v, y_v), in alternation.
inline GaussianUnivariate train_gaussian_univariate(double x_t, double y_t, double x_v,
                                                    double y_v, std::size_t steps = 4000,
                                                    double lr_w = 0.05,
                                                    double lr_sigma = 0.05) {
    GaussianUnivariate g{0.0, 0.0};
    for (std::size_t t = 0; t < steps; ++t) {
        g.w -= lr_w * gaussian_nll(g, x_t, y_t).grad_w;
        g.log_sigma -= lr_sigma * gaussian_nll(g, x_v, y_v).grad_log_sigma;
    }
    return g;
}

/// Data-growth variant: trains on data_small.train until transition_epoch,
/// then continues the same parameter state on data_full.train.
inline RunRecord train_growth(NoisyMlp& m, const SplitDataset& data_small,
                              const SplitDataset& data_full, std::size_t transition_epoch,
                              const TrainConfig& cfg) {
    if (data_small.train.size() > data_full.train.size())
        throw std::invalid_argument("train_growth: small set larger than full set");
    return train_noisy_impl(
        m,
        [&](std::size_t epoch) -> const Dataset& {
            return epoch < transition_epoch ? data_small.train : data_full.train;
        },
        data_full, cfg, AugmentState{});
}

} // namespace xreg
