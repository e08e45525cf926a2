#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "xreg/dataset.hpp"

using namespace xreg;

namespace {

double column_corr(const Matrix& x, std::size_t a, std::size_t b) {
    const double n = static_cast<double>(x.rows);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        ma += x(i, a);
        mb += x(i, b);
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double da = x(i, a) - ma, db = x(i, b) - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace

TEST_CASE("gen_correlated default geometry") {
    Rng rng(1);
    auto cd = gen_correlated(5, 100, 0.1, 400, rng);
    REQUIRE(cd.ds.X.cols == 100);
    REQUIRE(cd.ds.size() == 400);
    // all members of a group are near-copies of the base
    for (std::size_t j : {5u, 25u, 60u, 95u})
        REQUIRE(column_corr(cd.ds.X, j % 5, j) > 0.97);
    // coefficients alternate by group
    REQUIRE(cd.w_true[0] == 1.0);
    REQUIRE(cd.w_true[1] == -1.0);
    REQUIRE(cd.w_true[6] == -1.0);
}

TEST_CASE("gen_correlated zero-noise copies and degenerate group count") {
    Rng rng(2);
    auto cd = gen_correlated(3, 9, 0.0, 50, rng);
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t j = 3; j < 9; ++j)
            REQUIRE(cd.ds.X(i, j) == cd.ds.X(i, j % 3));

    Rng rng2(3);
    auto lone = gen_correlated(6, 6, 0.1, 10000, rng2);
    for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = a + 1; b < 6; ++b)
            REQUIRE(std::abs(column_corr(lone.ds.X, a, b)) < 0.1);

    Rng rng3(4);
    REQUIRE_THROWS_AS(gen_correlated(5, 4, 0.1, 10, rng3), std::invalid_argument);
}

TEST_CASE("gen_correlated ill-conditioning exceeds 1e3") {
    Rng rng(1);
    auto cd = gen_correlated(5, 100, 0.1, 400, rng);
    Matrix xtx = matmul_t_self(cd.ds.X);
    Eigen::MatrixXd a = emap(xtx);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const double cond = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
    REQUIRE(cond > 1e3);
}

TEST_CASE("gen_spline mean values and gap region") {
    REQUIRE(std::abs(spline_mean(0.25) - 1.0) < 1e-12);
    REQUIRE(std::abs(spline_mean(0.0)) < 1e-12);
    Rng rng(5);
    Dataset ds = gen_spline(20, rng);
    REQUIRE(ds.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
        const double x = ds.X(i, 0);
        REQUIRE(x >= 0.0);
        REQUIRE(x <= 1.0);
        REQUIRE(!(x > 0.55 && x < 0.7));
    }
}

TEST_CASE("gen_blobs separation, noise ceiling, determinism") {
    Rng rng(6);
    Dataset ds = gen_blobs(4, 2000, 10.0, 0.0, rng);
    // nearest true centroid classifies cleanly at sep=10
    constexpr double two_pi = 6.283185307179586476925287;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        double best = 1e300;
        int bc = -1;
        for (int c = 0; c < 4; ++c) {
            const double ang = two_pi * c / 4.0;
            const double dx = ds.X(i, 0) - 10.0 * std::cos(ang);
            const double dy = ds.X(i, 1) - 10.0 * std::sin(ang);
            if (dx * dx + dy * dy < best) {
                best = dx * dx + dy * dy;
                bc = c;
            }
        }
        correct += (bc == ds.label(i));
    }
    REQUIRE(static_cast<double>(correct) / static_cast<double>(ds.size()) > 0.99);

    // label noise 0.2: oracle classifier hits the analytic ceiling 1 - 0.2*(1 - 1/4)
    Rng rng2(7);
    Dataset noisy = gen_blobs(4, 20000, 10.0, 0.2, rng2);
    correct = 0;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
        double best = 1e300;
        int bc = -1;
        for (int c = 0; c < 4; ++c) {
            const double ang = two_pi * c / 4.0;
            const double dx = noisy.X(i, 0) - 10.0 * std::cos(ang);
            const double dy = noisy.X(i, 1) - 10.0 * std::sin(ang);
            if (dx * dx + dy * dy < best) {
                best = dx * dx + dy * dy;
                bc = c;
            }
        }
        correct += (bc == noisy.label(i));
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(noisy.size());
    REQUIRE(std::abs(acc - (1.0 - 0.2 * 0.75)) < 0.02);

    Rng a(8), b(8);
    Dataset da = gen_blobs(3, 100, 5.0, 0.1, a);
    Dataset db = gen_blobs(3, 100, 5.0, 0.1, b);
    REQUIRE(da.X.data == db.X.data);
    REQUIRE(da.y == db.y);
}

TEST_CASE("gen_bumps is class-balanced-ish and shift-invariant by construction") {
    Rng rng(9);
    Dataset ds = gen_bumps(4, 500, 16, 0.0, rng);
    REQUIRE(ds.features() == 16);
    // a grid point near the bump center carries most of the peak; the
    // narrowest width (0.6) can sample the peak half a cell off-center
    for (std::size_t i = 0; i < 20; ++i) {
        double mx = 0;
        for (std::size_t j = 0; j < 16; ++j) mx = std::max(mx, ds.X(i, j));
        REQUIRE(mx > 0.65);
    }
}

TEST_CASE("load_csv shapes, standardization, errors") {
    const char* path = "test_datagen_tmp.csv";
    {
        std::ofstream f(path);
        f << "a,b,target\n1,10,100\n2,20,200\n3,30,300\n4,40,400\n";
    }
    Dataset ds = load_csv(path, "target", false);
    REQUIRE(ds.size() == 4);
    REQUIRE(ds.features() == 2);
    REQUIRE(ds.y[2] == 300.0);
    REQUIRE(ds.X(2, 1) == 30.0);

    Dataset std_ds = load_csv(path, "target", true);
    for (std::size_t j = 0; j < 2; ++j) {
        double m = 0, v = 0;
        for (std::size_t i = 0; i < 4; ++i) m += std_ds.X(i, j);
        m /= 4;
        for (std::size_t i = 0; i < 4; ++i) v += (std_ds.X(i, j) - m) * (std_ds.X(i, j) - m);
        REQUIRE(std::abs(m) < 1e-10);
        REQUIRE(std::abs(std::sqrt(v / 4) - 1.0) < 1e-10);
    }

    REQUIRE_THROWS_WITH(load_csv(path, "missing", false),
                        Catch::Matchers::ContainsSubstring("missing"));
    {
        std::ofstream f(path);
        f << "a,target\n1,2\nx,4\n";
    }
    REQUIRE_THROWS_WITH(load_csv(path, "target", false),
                        Catch::Matchers::ContainsSubstring("row 3"));
    REQUIRE_THROWS(load_csv("no_such_file_anywhere.csv", "target", false));
    std::remove(path);
}

TEST_CASE("split sizes, disjointness, determinism") {
    Rng rng(10);
    Matrix x(100, 2);
    for (double& v : x.data) v = rng.gauss();
    Vec y(100);
    for (std::size_t i = 0; i < 100; ++i) y[i] = static_cast<double>(i);
    Dataset ds{std::move(x), std::move(y), Task::regression, {}};

    Rng srng(11);
    SplitDataset sp = split(ds, 0.8, 0.1, 0.1, srng);
    REQUIRE(sp.train.size() == 80);
    REQUIRE(sp.reg.size() == 10);
    REQUIRE(sp.test.size() == 10);

    std::set<double> seen;
    for (const Dataset* d : {&sp.train, &sp.reg, &sp.test})
        for (double v : d->y) REQUIRE(seen.insert(v).second);
    REQUIRE(seen.size() == 100);

    REQUIRE_THROWS_AS([&] {
        Rng r(1);
        return split(ds, 0.999, 0.0005, 0.0005, r);
    }(), std::invalid_argument);
}

TEST_CASE("split partitions exhaustive for random fraction draws") {
    Rng rng(12);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 30 + rng.below(400);
        double a = 0.2 + 0.6 * rng.uniform();
        double b = (1.0 - a) * (0.2 + 0.6 * rng.uniform());
        double c = 1.0 - a - b;
        Matrix x(n, 1);
        Vec y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x(i, 0) = static_cast<double>(i);
            y[i] = static_cast<double>(i);
        }
        Dataset ds{std::move(x), std::move(y), Task::regression, {}};
        SplitDataset sp = split(ds, a, b, c, rng);
        std::set<double> seen;
        for (const Dataset* d : {&sp.train, &sp.reg, &sp.test})
            for (double v : d->y) REQUIRE(seen.insert(v).second);
        REQUIRE(seen.size() == n);
    }
}

TEST_CASE("split supports a reg set at 1 percent of training scale") {
    Rng rng(13);
    Matrix x(10000, 1);
    Vec y(10000);
    Dataset ds{std::move(x), std::move(y), Task::regression, {}};
    SplitDataset sp = split(ds, 0.98, 0.01, 0.01, rng);
    REQUIRE(sp.reg.size() == 100);
}
