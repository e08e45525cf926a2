#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "xreg/finite_diff.hpp"
#include "xreg/gaussian.hpp"
#include "xreg/linear_model.hpp"
#include "xreg/spline_model.hpp"

using namespace xreg;

TEST_CASE("linear_forward zero magnitude and unit cases") {
    LinearReparam m;
    m.theta = {1.0, 0.0};
    m.rho = kRhoMin;
    m.bias = 3.0;
    m.use_bias = true;
    Matrix x = Matrix::identity(2);
    Vec p = linear_forward(m, x);
    REQUIRE(p[0] == Catch::Approx(3.0).margin(1e-6));
    REQUIRE(p[1] == Catch::Approx(3.0).margin(1e-6));

    m.rho = 2.0;
    m.use_bias = false;
    m.bias = 0.0;
    p = linear_forward(m, x);
    REQUIRE(p[0] == Catch::Approx(2.0));
    REQUIRE(p[1] == Catch::Approx(0.0));
}

TEST_CASE("compose-decompose round trip") {
    Rng rng(4);
    Vec w(9);
    for (double& v : w) v = rng.gauss(3.0);
    LinearReparam m = LinearReparam::from_weights(w);
    Vec back = m.weights();
    for (std::size_t i = 0; i < w.size(); ++i)
        REQUIRE(std::abs(back[i] - w[i]) < 1e-12);
    REQUIRE(norm2(m.theta) == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("linear_grads tangency, stationarity, finite-diff oracle") {
    Rng rng(31);
    const std::size_t n = 40, p = 7;
    Matrix x(n, p);
    for (double& v : x.data) v = rng.gauss();
    Vec y(n);
    for (double& v : y) v = rng.gauss();
    LinearReparam m;
    m.theta.assign(p, 0.0);
    for (double& v : m.theta) v = rng.gauss();
    m.renormalize();
    m.rho = 1.7;

    LinearGrads g = linear_grads(m, x, y);
    REQUIRE(std::abs(dot(g.grad_theta_tangent, m.theta)) < 1e-10);

    // interpolation point: y = rho X theta -> both gradients vanish
    Vec y_fit = linear_forward(m, x);
    LinearGrads g0 = linear_grads(m, x, y_fit);
    REQUIRE(norm2(g0.grad_theta_tangent) < 1e-10);
    REQUIRE(std::abs(g0.grad_rho) < 1e-10);

    // finite differences under the constraint parameterization
    auto loss_rho = [&](const Vec& r) {
        LinearReparam mm = m;
        mm.rho = r[0];
        return linear_mse(mm, x, y);
    };
    Vec fd_rho = finite_diff(loss_rho, {m.rho});
    REQUIRE(rel_err(g.grad_rho, fd_rho[0]) < 1e-6);

    // theta gradient: perturb along a tangent direction and compare slopes
    Vec dir(p);
    for (double& v : dir) v = rng.gauss();
    const double along = dot(dir, m.theta);
    axpy(-along, m.theta, dir);
    scale(dir, 1.0 / norm2(dir));
    auto loss_t = [&](const Vec& t) {
        LinearReparam mm = m;
        mm.theta = m.theta;
        axpy(t[0], dir, mm.theta);
        return linear_mse(mm, x, y); // no renormalization: raw Euclidean slope
    };
    Vec fd_t = finite_diff(loss_t, {0.0});
    REQUIRE(rel_err(dot(g.grad_theta_tangent, dir), fd_t[0]) < 1e-6);
}

TEST_CASE("bspline partition of unity and boundaries") {
    Rng rng(6);
    Vec xs(100);
    for (double& v : xs) v = rng.uniform();
    xs[0] = 0.0;
    xs[1] = 1.0;
    Matrix b = bspline_design(xs, 15);
    REQUIRE(b.cols == 17); // knots + degree - 1
    for (std::size_t i = 0; i < b.rows; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < b.cols; ++j) s += b(i, j);
        REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
    }
    // x = 0 puts all weight on the first basis function
    REQUIRE(b(0, 0) == Catch::Approx(1.0).margin(1e-12));
    for (std::size_t j = 1; j < b.cols; ++j) REQUIRE(std::abs(b(0, j)) < 1e-12);

    REQUIRE_THROWS_AS(bspline_design({-0.1}, 15), std::invalid_argument);
    REQUIRE_THROWS_AS(bspline_design({1.1}, 15), std::invalid_argument);
}

namespace {
// independent recursive Cox-de Boor evaluation (memoized nowhere, recursion
// straight from the definition) used as the oracle for the table-based design
double coxdeboor(const Vec& t, std::size_t j, std::size_t d, double x) {
    if (d == 0) return (t[j] <= x && x < t[j + 1]) ? 1.0 : 0.0;
    double left = 0.0, right = 0.0;
    if (t[j + d] != t[j]) left = (x - t[j]) / (t[j + d] - t[j]) * coxdeboor(t, j, d - 1, x);
    if (t[j + d + 1] != t[j + 1])
        right = (t[j + d + 1] - x) / (t[j + d + 1] - t[j + 1]) * coxdeboor(t, j + 1, d - 1, x);
    return left + right;
}
} // namespace

TEST_CASE("bspline matches independent recursive evaluation") {
    const std::size_t n_knots = 15, degree = 3;
    Vec t;
    for (std::size_t i = 0; i < degree; ++i) t.push_back(0.0);
    for (std::size_t i = 0; i < n_knots; ++i)
        t.push_back(static_cast<double>(i) / static_cast<double>(n_knots - 1));
    for (std::size_t i = 0; i < degree; ++i) t.push_back(1.0);

    Rng rng(8);
    Vec xs(25);
    for (double& v : xs) v = rng.uniform() * 0.999;
    Matrix b = bspline_design(xs, n_knots, degree);
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < b.cols; ++j)
            REQUIRE(b(i, j) == Catch::Approx(coxdeboor(t, j, degree, xs[i])).margin(1e-12));
}

TEST_CASE("second_diff_matrix annihilates constants and ramps, trace normalized") {
    Matrix d = second_diff_matrix(17);
    REQUIRE(d.rows == 15);
    Vec c(17, 2.5);
    REQUIRE(norm2(matvec(d, c)) < 1e-12);
    Vec ramp(17);
    for (std::size_t i = 0; i < 17; ++i) ramp[i] = 0.3 * static_cast<double>(i) - 1.0;
    REQUIRE(norm2(matvec(d, ramp)) < 1e-12);
    double tr = 0;
    for (double v : d.data) tr += v * v;
    REQUIRE(tr == Catch::Approx(17.0).margin(1e-12));
}

TEST_CASE("gaussian_nll gradients and stationary points") {
    GaussianUnivariate g{2.0, 0.0}; // w=2, sigma=1
    // y = w x: residual zero, d/dlog sigma = 1 (sigma wants to shrink)
    auto r = gaussian_nll(g, 1.5, 3.0);
    REQUIRE(r.grad_log_sigma == Catch::Approx(1.0));
    REQUIRE(r.grad_w == Catch::Approx(0.0));

    // sigma^2 = residual^2 -> stationary in log sigma
    GaussianUnivariate g2{1.0, std::log(2.0)};
    auto r2 = gaussian_nll(g2, 1.0, 3.0); // residual 2, sigma 2
    REQUIRE(r2.grad_log_sigma == Catch::Approx(0.0).margin(1e-12));

    GaussianUnivariate g3{0.7, -0.3};
    const double x = 1.3, y = 0.4;
    auto a = gaussian_nll(g3, x, y);
    auto fw = finite_diff([&](const Vec& v) {
        GaussianUnivariate gg{v[0], v[1]};
        return gaussian_nll(gg, x, y).loss;
    }, {g3.w, g3.log_sigma}, 1e-6);
    REQUIRE(rel_err(a.grad_w, fw[0]) < 1e-7);
    REQUIRE(rel_err(a.grad_log_sigma, fw[1]) < 1e-7);
}
