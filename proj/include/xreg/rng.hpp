#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace xreg {

/// Deterministic random source used everywhere in this library.
///
/// Core generator is std::mt19937_64 (bit-exact across platforms by the
/// standard); uniform and Gaussian transforms are implemented here instead of
/// relying on std::*_distribution, whose algorithms are implementation-defined.
/// Gaussians use the basic Box-Muller form (two uniforms per draw, no cached
/// spare), so the draw sequence is a pure function of (seed, call sequence).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // modulo bias is < 2^-40 for the sizes used here
        return gen_() % n;
    }

    /// Standard normal draw (Box-Muller, cosine branch).
    double gauss() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        constexpr double two_pi = 6.283185307179586476925287;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    double gauss(double sigma) { return sigma == 0.0 ? 0.0 : sigma * gauss(); }

    void fill_gauss(std::vector<double>& out, double sigma) {
        for (double& v : out) v = gauss(sigma);
    }

    /// Independent child stream. Mixing is splitmix64 over (seed, stream index),
    /// so parallel workers derived from one root seed never share a sequence.
    Rng child(std::uint64_t stream) const {
        std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

    /// Random permutation of 0..n-1 (Fisher-Yates).
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

/// n i.i.d. draws from N(0, sigma^2); sigma = 0 yields exact zeros.
inline std::vector<double> gauss_vector(Rng& rng, std::size_t n, double sigma) {
    std::vector<double> v(n);
    rng.fill_gauss(v, sigma);
    return v;
}

} // namespace xreg
