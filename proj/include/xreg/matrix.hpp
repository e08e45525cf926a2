#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace xreg {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Heavy kernels go through Eigen maps;
/// the storage itself stays a plain vector so serialization and tests can
/// touch raw values.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data; // row-major, rows*cols

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

using EigenMapRM =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenMapRMConst =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenMapVec = Eigen::Map<Eigen::VectorXd>;
using EigenMapVecConst = Eigen::Map<const Eigen::VectorXd>;

inline EigenMapRM emap(Matrix& m) {
    return EigenMapRM(m.data.data(), static_cast<Eigen::Index>(m.rows),
                      static_cast<Eigen::Index>(m.cols));
}
inline EigenMapRMConst emap(const Matrix& m) {
    return EigenMapRMConst(m.data.data(), static_cast<Eigen::Index>(m.rows),
                           static_cast<Eigen::Index>(m.cols));
}
inline EigenMapVec emap(Vec& v) {
    return EigenMapVec(v.data(), static_cast<Eigen::Index>(v.size()));
}
inline EigenMapVecConst emap(const Vec& v) {
    return EigenMapVecConst(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Vec matvec(const Matrix& a, const Vec& x) {
    if (a.cols != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
    Vec y(a.rows);
    emap(y) = emap(a) * emap(x);
    return y;
}

/// A^T x
inline Vec tmatvec(const Matrix& a, const Vec& x) {
    if (a.rows != x.size()) throw std::invalid_argument("tmatvec: dimension mismatch");
    Vec y(a.cols);
    emap(y) = emap(a).transpose() * emap(x);
    return y;
}

inline Matrix matmul_t_self(const Matrix& a) { // A^T A
    Matrix out(a.cols, a.cols);
    emap(out) = emap(a).transpose() * emap(a);
    return out;
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    return emap(a).dot(emap(b));
}

inline double norm2(const Vec& a) { return emap(a).norm(); }

inline void axpy(double alpha, const Vec& x, Vec& y) { // y += alpha*x
    emap(y) += alpha * emap(x);
}

inline void scale(Vec& x, double alpha) { emap(x) *= alpha; }

struct DecompositionError : std::runtime_error {
    int pivot;
    DecompositionError(const std::string& what, int pivot_index)
        : std::runtime_error(what), pivot(pivot_index) {}
};

/// Solve A x = b for symmetric positive definite A via Cholesky.
/// Throws DecompositionError naming the failing pivot when A is not SPD,
/// and std::invalid_argument on asymmetry (tolerance 1e-12 relative) or
/// dimension mismatch.
inline Vec solve_spd(const Matrix& a, const Vec& b) {
    const std::size_t n = a.rows;
    if (a.cols != n || b.size() != n)
        throw std::invalid_argument("solve_spd: dimension mismatch");
    double scale_a = 0.0;
    for (double v : a.data) scale_a = std::max(scale_a, std::abs(v));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(a(i, j) - a(j, i)) > 1e-12 * (1.0 + scale_a))
                throw std::invalid_argument("solve_spd: matrix not symmetric");

    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d <= 0.0)
            throw DecompositionError(
                "solve_spd: Cholesky pivot " + std::to_string(j) + " is non-positive",
                static_cast<int>(j));
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    Vec y(n); // L y = b
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    Vec x(n); // L^T x = y
    for (std::size_t ii = n; ii > 0; --ii) {
        const std::size_t i = ii - 1;
        double s = y[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
        x[i] = s / l(i, i);
    }
    return x;
}

} // namespace xreg
