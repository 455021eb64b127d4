#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "cullkit/error.hpp"

namespace cullkit::linalg {

/// Small dense row-major matrix for the solver internals.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    /// A^T A.
    Matrix gram() const
    {
        Matrix g(cols_, cols_);
        for (std::size_t r = 0; r < rows_; ++r) {
            const double* row = &data_[r * cols_];
            for (std::size_t i = 0; i < cols_; ++i) {
                const double ri = row[i];
                if (ri == 0.0) continue;
                for (std::size_t j = i; j < cols_; ++j) g(i, j) += ri * row[j];
            }
        }
        for (std::size_t i = 0; i < cols_; ++i)
            for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
        return g;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct SymmetricEigen {
    std::vector<double> values; // ascending
    Matrix vectors;             // column i pairs with values[i]
    int sweeps = 0;
};

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Iterates until the
/// off-diagonal Frobenius norm drops below rel_tol times the Frobenius norm of
/// the input (or the sweep cap is reached). Results are sorted ascending.
inline SymmetricEigen jacobi_eigen(Matrix a, double rel_tol = 1e-12, int max_sweeps = 100)
{
    const std::size_t n = a.rows();
    if (n != a.cols()) throw Error(ErrorCode::InvalidArgument, "jacobi_eigen needs a square matrix");
    Matrix v = Matrix::identity(n);

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) total += a(i, j) * a(i, j);
    const double scale = std::sqrt(total);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        if (scale == 0.0 || off_norm() <= rel_tol * scale) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    out.sweeps = sweep;
    for (std::size_t c = 0; c < n; ++c) {
        out.values[c] = a(order[c], order[c]);
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
    }
    return out;
}

/// Least-squares solution of A x = b by Householder QR. Returns nullopt when
/// A is numerically rank deficient (|R_ii| below rank_tol times the largest).
inline std::optional<std::vector<double>> solve_least_squares(Matrix a, std::vector<double> b, double rank_tol = 1e-12)
{
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (b.size() != m) throw Error(ErrorCode::DimensionMismatch, "least squares rhs size mismatch");
    if (m < n) return std::nullopt;

    std::vector<double> diag(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double norm_sq = 0.0;
        for (std::size_t i = k; i < m; ++i) norm_sq += a(i, k) * a(i, k);
        double alpha = std::sqrt(norm_sq);
        if (alpha == 0.0) {
            diag[k] = 0.0;
            continue;
        }
        if (a(k, k) > 0.0) alpha = -alpha;
        // v = x - alpha e1, stored in column k below the diagonal.
        a(k, k) -= alpha;
        double vnorm_sq = 0.0;
        for (std::size_t i = k; i < m; ++i) vnorm_sq += a(i, k) * a(i, k);
        for (std::size_t j = k + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += a(i, k) * a(i, j);
            s = 2.0 * s / vnorm_sq;
            for (std::size_t i = k; i < m; ++i) a(i, j) -= s * a(i, k);
        }
        double s = 0.0;
        for (std::size_t i = k; i < m; ++i) s += a(i, k) * b[i];
        s = 2.0 * s / vnorm_sq;
        for (std::size_t i = k; i < m; ++i) b[i] -= s * a(i, k);
        diag[k] = alpha;
    }

    double largest = 0.0;
    for (double d : diag) largest = std::max(largest, std::abs(d));
    if (largest == 0.0) return std::nullopt;
    for (double d : diag)
        if (std::abs(d) <= rank_tol * largest) return std::nullopt;

    std::vector<double> x(n, 0.0);
    for (std::size_t k = n; k-- > 0;) {
        double s = b[k];
        for (std::size_t j = k + 1; j < n; ++j) s -= a(k, j) * x[j];
        x[k] = s / diag[k];
    }
    return x;
}

} // namespace cullkit::linalg
