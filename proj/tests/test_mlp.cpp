#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "xreg/finite_diff.hpp"
#include "xreg/mlp.hpp"

using namespace xreg;

namespace {

NoisyMlp small_net(std::uint64_t seed = 2, double log_s0 = -0.5) {
    Rng rng(seed);
    return NoisyMlp::make({3, 8, 6}, 4, rng, log_s0);
}

Matrix random_input(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(n, d);
    for (double& v : x.data) v = rng.gauss();
    return x;
}

} // namespace

TEST_CASE("deterministic forward is repeatable and sigma=0 matches it") {
    NoisyMlp m = small_net();
    Matrix x = random_input(5, 3, 10);
    Matrix a = mlp_forward(m, x, nullptr);
    Matrix b = mlp_forward(m, x, nullptr);
    REQUIRE(a.data == b.data);

    NoisyMlp mz = m;
    for (double& ls : mz.log_sigma) ls = -std::numeric_limits<double>::infinity();
    Rng rng(3);
    NoiseDraw eps = draw_noise(mz, 5, rng);
    Matrix c = mlp_forward(mz, x, &eps);
    Matrix d = mlp_forward(mz, x, nullptr);
    REQUIRE(c.data == d.data);
}

TEST_CASE("layer norm output has zero mean and unit variance before noise") {
    NoisyMlp m = small_net();
    Matrix x = random_input(7, 3, 11);
    MlpCache cache;
    mlp_forward(m, x, nullptr, &cache);
    for (const Matrix& uhat : cache.uhat) {
        for (std::size_t i = 0; i < uhat.rows; ++i) {
            double mean = 0, var = 0;
            for (std::size_t j = 0; j < uhat.cols; ++j) mean += uhat(i, j);
            mean /= static_cast<double>(uhat.cols);
            for (std::size_t j = 0; j < uhat.cols; ++j) {
                const double dd = uhat(i, j) - mean;
                var += dd * dd;
            }
            var /= static_cast<double>(uhat.cols);
            REQUIRE(std::abs(mean) < 1e-6);
            REQUIRE(std::abs(var - 1.0) < 1e-3); // eps inside the sqrt shifts it slightly
        }
    }
}

TEST_CASE("cross-entropy gradients match finite differences for every parameter") {
    NoisyMlp m = small_net(4);
    const std::size_t n = 5;
    Matrix x = random_input(n, 3, 12);
    Vec labels = {0, 3, 1, 2, 1};
    Rng erng(9);
    NoiseDraw eps = draw_noise(m, n, erng);

    MlpCache cache;
    mlp_forward(m, x, &eps, &cache);
    CeResult ce = cross_entropy(cache.logits, labels);
    MlpGrads g = mlp_backward(m, cache, ce.dlogits, &eps, true);

    auto loss_at = [&](NoisyMlp& mm) {
        Matrix lg = mlp_forward(mm, x, &eps);
        return cross_entropy(lg, labels).loss;
    };
    const double h = 1e-6;
    double worst = 0;
    auto check_param = [&](double& ref, double analytic) {
        const double old = ref;
        ref = old + h * (1.0 + std::abs(old));
        const double fp = loss_at(m);
        ref = old - h * (1.0 + std::abs(old));
        const double fm = loss_at(m);
        ref = old;
        const double fd = (fp - fm) / (2.0 * h * (1.0 + std::abs(old)));
        const double denom = std::max(std::abs(fd), 1e-7);
        worst = std::max(worst, std::abs(analytic - fd) / denom);
    };
    for (std::size_t l = 0; l < m.n_layers(); ++l)
        for (std::size_t k = 0; k < m.w[l].data.size(); ++k)
            check_param(m.w[l].data[k], g.w[l].data[k]);
    for (std::size_t k = 0; k < m.w_head.data.size(); ++k)
        check_param(m.w_head.data[k], g.w_head.data[k]);
    for (std::size_t k = 0; k < m.b_head.size(); ++k) check_param(m.b_head[k], g.b_head[k]);
    for (std::size_t l = 0; l < m.log_sigma.size(); ++l)
        check_param(m.log_sigma[l], g.log_sigma[l]);
    REQUIRE(worst < 1e-5);

    // input gradient (needed by the augmentation path)
    Vec xvec = x.data;
    auto loss_x = [&](const Vec& xv) {
        Matrix xx = x;
        xx.data = xv;
        Matrix lg = mlp_forward(m, xx, &eps);
        return cross_entropy(lg, labels).loss;
    };
    Vec fd_x = finite_diff(loss_x, xvec, 1e-6);
    REQUIRE(grad_rel_err(g.x.data, fd_x) < 1e-5);
}

TEST_CASE("mc_predict single sample equals one stochastic forward") {
    NoisyMlp m = small_net(6);
    Matrix x = random_input(4, 3, 13);
    Rng r1(21);
    Matrix p1 = mc_predict(m, x, 1, r1);
    Rng r2(21);
    NoiseDraw eps = draw_noise(m, 4, r2);
    Matrix p2 = mlp_forward(m, x, &eps);
    softmax_rows(p2);
    REQUIRE(p1.data == p2.data);
}

TEST_CASE("mc_predict with all sigma zero equals deterministic forward") {
    NoisyMlp m = small_net(7);
    for (double& ls : m.log_sigma) ls = -std::numeric_limits<double>::infinity();
    Matrix x = random_input(4, 3, 14);
    Rng rng(5);
    Matrix p = mc_predict(m, x, 8, rng);
    Matrix q = mlp_forward(m, x, nullptr);
    softmax_rows(q);
    for (std::size_t i = 0; i < p.data.size(); ++i)
        REQUIRE(p.data[i] == Catch::Approx(q.data[i]).margin(1e-15));
}

TEST_CASE("mc_predict variance shrinks like 1/K") {
    NoisyMlp m = small_net(8, 0.3); // sizeable noise so the variance is visible
    Matrix x = random_input(1, 3, 15);
    Rng rng(33);
    const std::size_t reps = 300;
    Vec ks = {1, 4, 16, 64};
    Vec log_var;
    for (double kd : ks) {
        const auto k = static_cast<std::size_t>(kd);
        Vec vals(reps);
        for (std::size_t r = 0; r < reps; ++r) vals[r] = mc_predict(m, x, k, rng)(0, 0);
        double mean = 0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(reps);
        double var = 0;
        for (double v : vals) var += (v - mean) * (v - mean);
        var /= static_cast<double>(reps - 1);
        log_var.push_back(std::log(var));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const double lx = std::log(ks[i]);
        sx += lx;
        sy += log_var[i];
        sxx += lx * lx;
        sxy += lx * log_var[i];
    }
    const double n = static_cast<double>(ks.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    REQUIRE(slope > -1.2);
    REQUIRE(slope < -0.8);
}

TEST_CASE("mc_ce_loss gradients match finite differences with frozen draws") {
    NoisyMlp m = small_net(9, -0.8);
    Matrix x = random_input(6, 3, 16);
    Vec labels = {1, 0, 2, 3, 1, 2};
    auto loss_at = [&](NoisyMlp& mm) {
        Rng rng(777); // same seed freezes the K draws
        return mc_ce_loss(mm, x, labels, 3, rng).loss;
    };
    Rng rng(777);
    McLossResult r = mc_ce_loss(m, x, labels, 3, rng);
    const double h = 1e-6;
    for (std::size_t l = 0; l < m.log_sigma.size(); ++l) {
        const double old = m.log_sigma[l];
        m.log_sigma[l] = old + h;
        const double fp = loss_at(m);
        m.log_sigma[l] = old - h;
        const double fm = loss_at(m);
        m.log_sigma[l] = old;
        const double fd = (fp - fm) / (2 * h);
        REQUIRE(rel_err(r.grads.log_sigma[l], fd) < 1e-5);
    }
    // a few theta entries flow through all K samples too
    for (auto [l, idx] : {std::pair<std::size_t, std::size_t>{0, 5}, {1, 17}}) {
        const double old = m.w[l].data[idx];
        m.w[l].data[idx] = old + h;
        const double fp = loss_at(m);
        m.w[l].data[idx] = old - h;
        const double fm = loss_at(m);
        m.w[l].data[idx] = old;
        const double fd = (fp - fm) / (2 * h);
        REQUIRE(rel_err(r.grads.w[l].data[idx], fd) < 1e-4);
    }
}
