#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace psi {

// Dense row-major matrix of doubles. Rows are the unit of access everywhere
// in this library (one embedding per row).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> row(std::size_t r) noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

// Scales v to unit length and returns the original norm. Leaves v untouched if
// the norm is zero.
inline double normalize(std::span<double> v) noexcept {
    const double n = norm(v);
    if (n > 0.0)
        for (double& x : v) x /= n;
    return n;
}

// Pairwise cosine distances 1 - <z_i, z_j> for unit-norm rows.
inline Matrix cosine_distance_matrix(const Matrix& z) {
    const std::size_t n = z.rows();
    Matrix dist(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = 1.0 - dot(z.row(i), z.row(j));
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }
    return dist;
}

}  // namespace psi
