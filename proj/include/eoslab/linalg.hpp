#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eoslab/errors.hpp"

namespace eoslab {

using Vector = std::vector<double>;

/// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    [[nodiscard]] static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    /// Builds from nested rows; all rows must have equal length.
    [[nodiscard]] static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.front().size();
        Matrix m(r, c);
        for (std::size_t i = 0; i < r; ++i) {
            if (rows[i].size() != c) throw InvalidInput("ragged rows in Matrix::from_rows");
            std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
        }
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    [[nodiscard]] std::span<double> row(std::size_t i) noexcept {
        return {data_.data() + i * cols_, cols_};
    }
    [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    [[nodiscard]] Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    [[nodiscard]] double max_abs() const noexcept {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    [[nodiscard]] double frobenius() const noexcept {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

[[nodiscard]] inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidInput("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

[[nodiscard]] inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// m * v
[[nodiscard]] inline Vector matvec(const Matrix& m, std::span<const double> v) {
    if (v.size() != m.cols()) throw InvalidInput("matvec: dimension mismatch");
    Vector out(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * v[j];
        out[i] = s;
    }
    return out;
}

/// mᵀ * v
[[nodiscard]] inline Vector matvec_t(const Matrix& m, std::span<const double> v) {
    if (v.size() != m.rows()) throw InvalidInput("matvec_t: dimension mismatch");
    Vector out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double vi = v[i];
        const auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) out[j] += vi * r[j];
    }
    return out;
}

[[nodiscard]] inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw InvalidInput("matmul: dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto bk = b.row(k);
            for (std::size_t j = 0; j < bk.size(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

/// Square matrix whose stored entries satisfy m(i,j) == m(j,i) exactly.
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(Matrix m) : m_(std::move(m)) {
        if (m_.rows() != m_.cols()) throw InvalidInput("SymMatrix: matrix is not square");
        for (std::size_t i = 0; i < m_.rows(); ++i)
            for (std::size_t j = i + 1; j < m_.cols(); ++j)
                if (m_(i, j) != m_(j, i))
                    throw InvalidInput("SymMatrix: entries (" + std::to_string(i) + "," +
                                       std::to_string(j) + ") are not symmetric");
    }

    /// Mirrors the upper triangle onto the lower one.
    [[nodiscard]] static SymMatrix from_upper(Matrix m) {
        if (m.rows() != m.cols()) throw InvalidInput("SymMatrix: matrix is not square");
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = i + 1; j < m.cols(); ++j) m(j, i) = m(i, j);
        return SymMatrix(std::move(m));
    }

    [[nodiscard]] std::size_t dim() const noexcept { return m_.rows(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }
    [[nodiscard]] const Matrix& matrix() const noexcept { return m_; }

private:
    Matrix m_;
};

/// J Jᵀ, computed on the upper triangle and mirrored.
[[nodiscard]] inline SymMatrix gram(const Matrix& j) {
    const std::size_t d = j.rows();
    Matrix g(d, d);
    for (std::size_t a = 0; a < d; ++a) {
        const auto ra = j.row(a);
        for (std::size_t b = a; b < d; ++b) {
            const auto rb = j.row(b);
            double s = 0.0;
            for (std::size_t i = 0; i < ra.size(); ++i) s += ra[i] * rb[i];
            g(a, b) = s;
        }
    }
    return SymMatrix::from_upper(std::move(g));
}

struct EigenDecomposition {
    Vector values;   ///< non-increasing
    Matrix vectors;  ///< column k pairs with values[k]
    int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for dense symmetric matrices.
///
/// Sweeps visit pairs (p, q), p < q, in row order. Iteration stops once the
/// off-diagonal Frobenius norm falls below 1e-12 times the Frobenius norm of
/// the input. Each eigenvector is sign-normalized so that its largest
/// magnitude component is positive.
[[nodiscard]] inline EigenDecomposition sym_eigen(const SymMatrix& m) {
    const std::size_t n = m.dim();
    if (n == 0) throw InvalidInput("sym_eigen: empty matrix");
    for (double v : m.matrix().data())
        if (!std::isfinite(v)) throw InvalidInput("sym_eigen: non-finite entry");

    Matrix a = m.matrix();
    Matrix v = Matrix::identity(n);
    const double target = 1e-12 * a.frobenius();

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
        return std::sqrt(s);
    };

    constexpr int kMaxSweeps = 100;
    int sweep = 0;
    for (; sweep < kMaxSweeps && off_norm() > target; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                a(p, p) -= t * apq;
                a(q, q) += t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    if (r == p || r == q) continue;
                    const double arp = a(r, p);
                    const double arq = a(r, q);
                    const double np = c * arp - s * arq;
                    const double nq = s * arp + c * arq;
                    a(r, p) = np;
                    a(p, r) = np;
                    a(r, q) = nq;
                    a(q, r) = nq;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double vrp = v(r, p);
                    const double vrq = v(r, q);
                    v(r, p) = c * vrp - s * vrq;
                    v(r, q) = s * vrp + c * vrq;
                }
            }
        }
    }
    if (off_norm() > target) throw InternalError("sym_eigen: Jacobi sweeps did not converge");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenDecomposition out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    out.sweeps = sweep;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.values[k] = a(src, src);
        std::size_t arg = 0;
        for (std::size_t r = 1; r < n; ++r)
            if (std::abs(v(r, src)) > std::abs(v(arg, src))) arg = r;
        const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = sign * v(r, src);
    }
    return out;
}

}  // namespace eoslab
