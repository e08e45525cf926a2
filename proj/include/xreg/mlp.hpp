#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "xreg/matrix.hpp"
#include "xreg/rng.hpp"

namespace xreg {

constexpr double kLayerNormEps = 1e-5;
constexpr double kLogSigmaCap = 5.0;

/// Feedforward classifier with, per hidden layer: linear map, layer
/// normalization (no affine parameters), additive Gaussian noise with learned
/// scale sigma_l = exp(log_sigma_l), then ReLU. The head is a plain linear
/// layer. Noise scales are the regularization parameters; everything else is
/// a training parameter.
struct NoisyMlp {
    std::vector<Matrix> w; // hidden layer weights, w[l]: fan_in x fan_out
    Matrix w_head;         // last hidden width x n_classes
    Vec b_head;
    Vec log_sigma; // one per hidden layer

    std::size_t n_layers() const { return w.size(); }
    std::size_t n_in() const { return w.front().rows; }
    std::size_t n_classes() const { return b_head.size(); }

    double sigma(std::size_t l) const { return std::exp(log_sigma[l]); }

    /// He-style init for the hidden stack, smaller head scale.
    static NoisyMlp make(const std::vector<std::size_t>& dims, std::size_t n_classes,
                         Rng& rng, double log_sigma0 = -3.0) {
        NoisyMlp m;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            Matrix wl(dims[l], dims[l + 1]);
            const double s = std::sqrt(2.0 / static_cast<double>(dims[l]));
            for (double& v : wl.data) v = rng.gauss(s);
            m.w.push_back(std::move(wl));
        }
        m.w_head = Matrix(dims.back(), n_classes);
        const double hs = std::sqrt(1.0 / static_cast<double>(dims.back()));
        for (double& v : m.w_head.data) v = rng.gauss(hs);
        m.b_head.assign(n_classes, 0.0);
        m.log_sigma.assign(m.w.size(), log_sigma0);
        return m;
    }
};

/// Per-layer standard-normal noise for a batch; empty shape means eps = 0
/// (the deterministic forward used at test time).
using NoiseDraw = std::vector<Matrix>;

inline NoiseDraw draw_noise(const NoisyMlp& m, std::size_t batch, Rng& rng) {
    NoiseDraw eps;
    eps.reserve(m.n_layers());
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        Matrix e(batch, m.w[l].cols);
        for (double& v : e.data) v = rng.gauss();
        eps.push_back(std::move(e));
    }
    return eps;
}

struct MlpCache {
    std::vector<Matrix> h;    // layer inputs, h[0] = X, size n_layers+1
    std::vector<Matrix> uhat; // layer-normalized pre-activations
    std::vector<Matrix> pre;  // uhat + sigma*eps (ReLU input)
    std::vector<Vec> inv_sd;  // 1/sqrt(var + eps) per row per layer
    Matrix logits;
};

/// Forward pass for a batch; eps == nullptr means deterministic (eps = 0).
inline Matrix mlp_forward(const NoisyMlp& m, const Matrix& x, const NoiseDraw* eps,
                          MlpCache* cache = nullptr) {
    if (x.cols != m.n_in()) throw std::invalid_argument("mlp_forward: input width mismatch");
    if (eps && eps->size() != m.n_layers())
        throw std::invalid_argument("mlp_forward: need one noise matrix per layer");
    Matrix h = x;
    if (cache) {
        *cache = MlpCache{};
        cache->h.push_back(h);
    }
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        const std::size_t width = m.w[l].cols;
        Matrix u(h.rows, width);
        emap(u) = emap(h) * emap(m.w[l]);
        Vec inv_sd(u.rows);
        for (std::size_t i = 0; i < u.rows; ++i) {
            double mean = 0;
            for (std::size_t j = 0; j < width; ++j) mean += u(i, j);
            mean /= static_cast<double>(width);
            double var = 0;
            for (std::size_t j = 0; j < width; ++j) {
                const double d = u(i, j) - mean;
                var += d * d;
            }
            var /= static_cast<double>(width);
            const double isd = 1.0 / std::sqrt(var + kLayerNormEps);
            inv_sd[i] = isd;
            for (std::size_t j = 0; j < width; ++j) u(i, j) = (u(i, j) - mean) * isd;
        }
        Matrix uhat = u; // normalized
        if (eps) {
            const double sig = m.sigma(l);
            const Matrix& e = (*eps)[l];
            if (e.rows != u.rows || e.cols != width)
                throw std::invalid_argument("mlp_forward: noise shape mismatch");
            for (std::size_t k = 0; k < u.data.size(); ++k) u.data[k] += sig * e.data[k];
        }
        Matrix pre = u;
        for (double& v : u.data) v = v > 0.0 ? v : 0.0;
        if (cache) {
            cache->uhat.push_back(std::move(uhat));
            cache->pre.push_back(std::move(pre));
            cache->inv_sd.push_back(std::move(inv_sd));
            cache->h.push_back(u);
        }
        h = std::move(u);
    }
    Matrix logits(h.rows, m.n_classes());
    emap(logits) = emap(h) * emap(m.w_head);
    for (std::size_t i = 0; i < logits.rows; ++i)
        for (std::size_t j = 0; j < logits.cols; ++j) logits(i, j) += m.b_head[j];
    if (cache) cache->logits = logits;
    return logits;
}

struct MlpGrads {
    std::vector<Matrix> w;
    Matrix w_head;
    Vec b_head;
    Vec log_sigma;
    Matrix x; // d loss / d input, filled when requested

    static MlpGrads zeros_like(const NoisyMlp& m) {
        MlpGrads g;
        for (const Matrix& wl : m.w) g.w.emplace_back(wl.rows, wl.cols);
        g.w_head = Matrix(m.w_head.rows, m.w_head.cols);
        g.b_head.assign(m.b_head.size(), 0.0);
        g.log_sigma.assign(m.log_sigma.size(), 0.0);
        return g;
    }

    void add_scaled(const MlpGrads& o, double a) {
        for (std::size_t l = 0; l < w.size(); ++l) emap(w[l]) += a * emap(o.w[l]);
        emap(w_head) += a * emap(o.w_head);
        emap(b_head) += a * emap(o.b_head);
        emap(log_sigma) += a * emap(o.log_sigma);
    }
};

/// Reverse pass from d loss / d logits. Layer-norm backward uses the standard
/// no-affine form; the noise site contributes d loss / d log_sigma_l =
/// sigma_l * sum(dpre * eps_l).
inline MlpGrads mlp_backward(const NoisyMlp& m, const MlpCache& cache, const Matrix& dlogits,
                             const NoiseDraw* eps, bool want_input_grad = false) {
    MlpGrads g = MlpGrads::zeros_like(m);
    const Matrix& h_last = cache.h.back();
    emap(g.w_head) = emap(h_last).transpose() * emap(dlogits);
    for (std::size_t i = 0; i < dlogits.rows; ++i)
        for (std::size_t j = 0; j < dlogits.cols; ++j) g.b_head[j] += dlogits(i, j);
    Matrix dh(h_last.rows, h_last.cols);
    emap(dh) = emap(dlogits) * emap(m.w_head).transpose();

    for (std::size_t li = m.n_layers(); li > 0; --li) {
        const std::size_t l = li - 1;
        const Matrix& pre = cache.pre[l];
        const std::size_t width = pre.cols;
        Matrix dpre = dh;
        for (std::size_t k = 0; k < dpre.data.size(); ++k)
            if (pre.data[k] <= 0.0) dpre.data[k] = 0.0;
        if (eps) {
            const double sig = m.sigma(l);
            double acc = 0;
            const Matrix& e = (*eps)[l];
            for (std::size_t k = 0; k < dpre.data.size(); ++k) acc += dpre.data[k] * e.data[k];
            g.log_sigma[l] = sig * acc;
        }
        // layer-norm backward: du = isd * (dy - mean(dy) - y*mean(dy*y)) per row
        const Matrix& y = cache.uhat[l];
        Matrix du(dpre.rows, width);
        for (std::size_t i = 0; i < dpre.rows; ++i) {
            double mean_dy = 0, mean_dyy = 0;
            for (std::size_t j = 0; j < width; ++j) {
                mean_dy += dpre(i, j);
                mean_dyy += dpre(i, j) * y(i, j);
            }
            mean_dy /= static_cast<double>(width);
            mean_dyy /= static_cast<double>(width);
            const double isd = cache.inv_sd[l][i];
            for (std::size_t j = 0; j < width; ++j)
                du(i, j) = isd * (dpre(i, j) - mean_dy - y(i, j) * mean_dyy);
        }
        emap(g.w[l]) = emap(cache.h[l]).transpose() * emap(du);
        if (l > 0 || want_input_grad) {
            Matrix next(du.rows, m.w[l].rows);
            emap(next) = emap(du) * emap(m.w[l]).transpose();
            if (l == 0) {
                g.x = std::move(next);
                break;
            }
            dh = std::move(next);
        }
    }
    return g;
}

inline void softmax_rows(Matrix& z) {
    for (std::size_t i = 0; i < z.rows; ++i) {
        double mx = z(i, 0);
        for (std::size_t j = 1; j < z.cols; ++j) mx = std::max(mx, z(i, j));
        double sum = 0;
        for (std::size_t j = 0; j < z.cols; ++j) {
            z(i, j) = std::exp(z(i, j) - mx);
            sum += z(i, j);
        }
        for (std::size_t j = 0; j < z.cols; ++j) z(i, j) /= sum;
    }
}

struct CeResult {
    double loss;
    Matrix dlogits;
};

/// Mean cross-entropy over the batch and its gradient wrt logits.
inline CeResult cross_entropy(const Matrix& logits, const Vec& labels) {
    Matrix p = logits;
    softmax_rows(p);
    const auto n = static_cast<double>(logits.rows);
    double loss = 0;
    Matrix d = p;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const auto yi = static_cast<std::size_t>(labels[i]);
        loss -= std::log(std::max(p(i, yi), 1e-300));
        d(i, yi) -= 1.0;
    }
    for (double& v : d.data) v /= n;
    return {loss / n, std::move(d)};
}

/// Monte-Carlo averaged class probabilities: mean over K stochastic forwards
/// of the post-softmax probabilities.
inline Matrix mc_predict(const NoisyMlp& m, const Matrix& x, std::size_t k, Rng& rng) {
    if (k < 1) throw std::invalid_argument("mc_predict: K must be >= 1");
    Matrix acc(x.rows, m.n_classes());
    for (std::size_t s = 0; s < k; ++s) {
        NoiseDraw eps = draw_noise(m, x.rows, rng);
        Matrix p = mlp_forward(m, x, &eps);
        softmax_rows(p);
        emap(acc) += emap(p);
    }
    for (double& v : acc.data) v /= static_cast<double>(k);
    return acc;
}

struct McLossResult {
    double loss;
    Matrix pbar;
    MlpGrads grads; // flows through all K samples (theta and log_sigma)
};

/// Cross-entropy of the K-sample MC-averaged probabilities, with gradients
/// flowing through every sample. This is the regularization-set objective of
/// the noisy training loop.
inline McLossResult mc_ce_loss(const NoisyMlp& m, const Matrix& x, const Vec& labels,
                               std::size_t k, Rng& rng) {
    if (k < 1) throw std::invalid_argument("mc_ce_loss: K must be >= 1");
    const std::size_t n = x.rows;
    std::vector<NoiseDraw> draws(k);
    std::vector<MlpCache> caches(k);
    std::vector<Matrix> probs(k);
    Matrix pbar(n, m.n_classes());
    for (std::size_t s = 0; s < k; ++s) {
        draws[s] = draw_noise(m, n, rng);
        mlp_forward(m, x, &draws[s], &caches[s]);
        probs[s] = caches[s].logits;
        softmax_rows(probs[s]);
        emap(pbar) += emap(probs[s]);
    }
    for (double& v : pbar.data) v /= static_cast<double>(k);

    double loss = 0;
    Matrix dpbar(n, m.n_classes());
    for (std::size_t i = 0; i < n; ++i) {
        const auto yi = static_cast<std::size_t>(labels[i]);
        const double pi = std::max(pbar(i, yi), 1e-300);
        loss -= std::log(pi);
        dpbar(i, yi) = -1.0 / pi / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);

    McLossResult out;
    out.loss = loss;
    out.pbar = std::move(pbar);
    out.grads = MlpGrads::zeros_like(m);
    for (std::size_t s = 0; s < k; ++s) {
        // dL/dlogits_s = (1/K) J_softmax(z_s)^T dpbar
        const Matrix& p = probs[s];
        Matrix dlogits(n, m.n_classes());
        for (std::size_t i = 0; i < n; ++i) {
            double inner = 0;
            for (std::size_t j = 0; j < p.cols; ++j) inner += dpbar(i, j) * p(i, j);
            for (std::size_t j = 0; j < p.cols; ++j)
                dlogits(i, j) = p(i, j) * (dpbar(i, j) - inner) / static_cast<double>(k);
        }
        MlpGrads g = mlp_backward(m, caches[s], dlogits, &draws[s]);
        out.grads.add_scaled(g, 1.0);
    }
    return out;
}

inline double mlp_accuracy(const NoisyMlp& m, const Matrix& x, const Vec& labels) {
    Matrix logits = mlp_forward(m, x, nullptr);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < logits.cols; ++j)
            if (logits(i, j) > logits(i, arg)) arg = j;
        if (arg == static_cast<std::size_t>(labels[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows);
}

} // namespace xreg
