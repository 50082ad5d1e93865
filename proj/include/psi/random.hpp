#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "psi/matrix.hpp"

namespace psi {

// Sub-seed derivation. Every stochastic step in the engine draws from a
// generator seeded with mix_seed(...) so streams are reproducible and
// independent of scheduling. The mixing is a splitmix64 finalizer folded over
// the inputs; constants below are part of the on-disk reproducibility
// contract and must not change.
inline constexpr std::uint64_t kMixIncrement = 0x9E3779B97F4A7C15ULL;
inline constexpr std::uint64_t kMixMul1 = 0xBF58476D1CE4E5B9ULL;
inline constexpr std::uint64_t kMixMul2 = 0x94D049BB133111EBULL;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += kMixIncrement;
    x = (x ^ (x >> 30)) * kMixMul1;
    x = (x ^ (x >> 27)) * kMixMul2;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed) noexcept { return splitmix64(seed); }

template <typename... Rest>
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t next, Rest... rest) noexcept {
    return mix_seed(splitmix64(seed) ^ next, static_cast<std::uint64_t>(rest)...);
}

// Stream tags used as the "component" input of mix_seed.
enum class StreamTag : std::uint64_t {
    null_s = 0x53,  // 'S'
    null_q = 0x51,  // 'Q'
    null_d = 0x44,  // 'D'
    kmeans = 0x4B,  // 'K'
    planted = 0x50, // 'P'
    null_set = 0x4E,// 'N'
    swaps = 0x57,   // 'W'
    prompts = 0x54, // 'T'
};

constexpr std::uint64_t tag(StreamTag t) noexcept { return static_cast<std::uint64_t>(t); }

// std::mt19937_64 is specified bit-exactly by the standard; the standard
// distributions are not, so the draws below are implemented on top of the
// raw engine output.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal (Box-Muller, one value per call).
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::span<T> v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    void unit_vector(std::span<double> out) {
        double n = 0.0;
        do {
            for (double& x : out) x = normal();
            n = normalize(out);
        } while (n == 0.0);
    }

private:
    std::mt19937_64 engine_;
};

// K x d matrix of i.i.d. points uniform on the unit sphere.
inline Matrix uniform_sphere(std::size_t rows, std::size_t dim, Rng& rng) {
    Matrix m(rows, dim);
    for (std::size_t r = 0; r < rows; ++r) rng.unit_vector(m.row(r));
    return m;
}

// Haar-distributed orthogonal matrix: Gram-Schmidt on a Gaussian matrix is
// the QR factorization with positive diagonal R, which yields the Haar law.
inline Matrix random_orthogonal(std::size_t dim, Rng& rng) {
    Matrix q(dim, dim);
    for (std::size_t r = 0; r < dim; ++r) {
        auto row = q.row(r);
        for (;;) {
            for (double& x : row) x = rng.normal();
            for (std::size_t p = 0; p < r; ++p) {
                const double proj = dot(row, q.row(p));
                auto prev = q.row(p);
                for (std::size_t c = 0; c < dim; ++c) row[c] -= proj * prev[c];
            }
            if (normalize(row) > 1e-10) break;
        }
    }
    return q;
}

// out = z * R^T, i.e. every row rotated by R.
inline Matrix rotate_rows(const Matrix& z, const Matrix& rot) {
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t r = 0; r < rot.rows(); ++r) out(i, r) = dot(rot.row(r), z.row(i));
    return out;
}

}  // namespace psi
