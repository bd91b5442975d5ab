#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eoslab/errors.hpp"
#include "eoslab/linalg.hpp"
#include "eoslab/rng.hpp"

namespace eoslab {

/// Dense D×P×P tensor, each P×P output slice symmetric.
class QTensor {
public:
    QTensor() = default;

    /// Zero tensor.
    QTensor(std::size_t d_out, std::size_t d_param)
        : d_(d_out), p_(d_param), data_(d_out * d_param * d_param, 0.0) {
        if (d_out == 0 || d_param == 0) throw InvalidInput("QTensor: dimensions must be positive");
    }

    /// Takes ownership of row-major [alpha][i][j] data; rejects asymmetric slices.
    QTensor(std::size_t d_out, std::size_t d_param, std::vector<double> data)
        : d_(d_out), p_(d_param), data_(std::move(data)) {
        if (d_out == 0 || d_param == 0) throw InvalidInput("QTensor: dimensions must be positive");
        if (data_.size() != d_ * p_ * p_) throw InvalidInput("QTensor: data size mismatch");
        for (std::size_t a = 0; a < d_; ++a)
            for (std::size_t i = 0; i < p_; ++i)
                for (std::size_t j = i + 1; j < p_; ++j)
                    if ((*this)(a, i, j) != (*this)(a, j, i))
                        throw InvalidInput("QTensor: slice " + std::to_string(a) +
                                           " is not symmetric");
    }

    /// One symmetric P×P matrix per output.
    [[nodiscard]] static QTensor from_slices(const std::vector<SymMatrix>& slices) {
        if (slices.empty()) throw InvalidInput("QTensor: no slices");
        const std::size_t p = slices.front().dim();
        QTensor q(slices.size(), p);
        for (std::size_t a = 0; a < slices.size(); ++a) {
            if (slices[a].dim() != p) throw InvalidInput("QTensor: slice size mismatch");
            const auto src = slices[a].matrix().data();
            std::copy(src.begin(), src.end(), q.slice(a).begin());
        }
        return q;
    }

    [[nodiscard]] std::size_t d_out() const noexcept { return d_; }
    [[nodiscard]] std::size_t d_param() const noexcept { return p_; }

    double operator()(std::size_t a, std::size_t i, std::size_t j) const noexcept {
        return data_[(a * p_ + i) * p_ + j];
    }

    /// Writes (i, j) and (j, i) together.
    void set(std::size_t a, std::size_t i, std::size_t j, double v) noexcept {
        data_[(a * p_ + i) * p_ + j] = v;
        data_[(a * p_ + j) * p_ + i] = v;
    }

    [[nodiscard]] std::span<const double> slice(std::size_t a) const noexcept {
        return {data_.data() + a * p_ * p_, p_ * p_};
    }

    [[nodiscard]] SymMatrix slice_matrix(std::size_t a) const {
        Matrix m(p_, p_);
        const auto s = slice(a);
        std::copy(s.begin(), s.end(), m.data().begin());
        return SymMatrix(std::move(m));
    }

    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    [[nodiscard]] bool is_zero() const noexcept {
        for (double v : data_)
            if (v != 0.0) return false;
        return true;
    }

private:
    std::span<double> slice(std::size_t a) noexcept { return {data_.data() + a * p_ * p_, p_ * p_}; }

    std::size_t d_ = 0;
    std::size_t p_ = 0;
    std::vector<double> data_;
};

namespace detail {

/// Above this parameter count, contractions use compensated summation.
inline constexpr std::size_t kKahanThreshold = 256;

struct Kahan {
    double sum = 0.0;
    double comp = 0.0;
    void add(double x) noexcept {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
};

}  // namespace detail

/// out[alpha] = sum_ij q[alpha][i][j] u[i] v[j]
[[nodiscard]] inline Vector contract_full(const QTensor& q, std::span<const double> u,
                                          std::span<const double> v) {
    const std::size_t p = q.d_param();
    if (u.size() != p || v.size() != p) throw InvalidInput("contract_full: dimension mismatch");
    Vector out(q.d_out(), 0.0);
    const bool compensated = p > detail::kKahanThreshold;
    for (std::size_t a = 0; a < q.d_out(); ++a) {
        const auto s = q.slice(a);
        if (compensated) {
            detail::Kahan outer;
            for (std::size_t i = 0; i < p; ++i) {
                detail::Kahan inner;
                for (std::size_t j = 0; j < p; ++j) inner.add(s[i * p + j] * v[j]);
                outer.add(u[i] * inner.sum);
            }
            out[a] = outer.sum;
        } else {
            double acc = 0.0;
            for (std::size_t i = 0; i < p; ++i) {
                double inner = 0.0;
                for (std::size_t j = 0; j < p; ++j) inner += s[i * p + j] * v[j];
                acc += u[i] * inner;
            }
            out[a] = acc;
        }
    }
    return out;
}

/// out[alpha][j] = sum_i q[alpha][i][j] u[i]
[[nodiscard]] inline Matrix contract_partial(const QTensor& q, std::span<const double> u) {
    const std::size_t p = q.d_param();
    if (u.size() != p) throw InvalidInput("contract_partial: dimension mismatch");
    Matrix out(q.d_out(), p);
    const bool compensated = p > detail::kKahanThreshold;
    std::vector<double> comp(compensated ? p : 0);
    for (std::size_t a = 0; a < q.d_out(); ++a) {
        const auto s = q.slice(a);
        auto row = out.row(a);
        if (compensated) {
            std::fill(comp.begin(), comp.end(), 0.0);
            for (std::size_t i = 0; i < p; ++i) {
                const double ui = u[i];
                const double* si = s.data() + i * p;
                for (std::size_t j = 0; j < p; ++j) {
                    const double y = si[j] * ui - comp[j];
                    const double t = row[j] + y;
                    comp[j] = (t - row[j]) - y;
                    row[j] = t;
                }
            }
        } else {
            for (std::size_t i = 0; i < p; ++i) {
                const double ui = u[i];
                const double* si = s.data() + i * p;
                for (std::size_t j = 0; j < p; ++j) row[j] += si[j] * ui;
            }
        }
    }
    return out;
}

/// I.i.d. normal(0, sigma²) entries, row-major over `shape`.
[[nodiscard]] inline std::vector<double> gaussian_tensor(std::span<const std::size_t> shape,
                                                         double sigma, RngSpec spec) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw InvalidInput("gaussian_tensor: sigma must be finite and nonnegative");
    std::size_t n = 1;
    for (std::size_t s : shape) {
        if (s == 0) throw InvalidInput("gaussian_tensor: zero-length dimension");
        n *= s;
    }
    std::vector<double> out(n, 0.0);
    if (sigma == 0.0) return out;
    Rng rng(spec);
    for (double& x : out) x = rng.normal(sigma);
    return out;
}

[[nodiscard]] inline Vector gaussian_vector(std::size_t n, double sigma, RngSpec spec) {
    const std::size_t shape[] = {n};
    return gaussian_tensor(shape, sigma, spec);
}

[[nodiscard]] inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double sigma,
                                            RngSpec spec) {
    const std::size_t shape[] = {rows, cols};
    auto data = gaussian_tensor(shape, sigma, spec);
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data().begin());
    return m;
}

/// Symmetrized Gaussian tensor: draws a[alpha][i][j] i.i.d. normal(0, sigma²)
/// and stores (a[alpha][i][j] + a[alpha][j][i]) / sqrt(2). Off-diagonal
/// entries then have variance sigma², diagonal entries 2 sigma².
[[nodiscard]] inline QTensor gaussian_qtensor(std::size_t d_out, std::size_t d_param,
                                              double sigma, RngSpec spec) {
    const std::size_t shape[] = {d_out, d_param, d_param};
    const auto raw = gaussian_tensor(shape, sigma, spec);
    QTensor q(d_out, d_param);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    const std::size_t p = d_param;
    for (std::size_t a = 0; a < d_out; ++a) {
        const double* s = raw.data() + a * p * p;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i; j < p; ++j) q.set(a, i, j, (s[i * p + j] + s[j * p + i]) * inv_sqrt2);
    }
    return q;
}

/// Large-size expectation of the top eigenvalue of J Jᵀ for a D×P Gaussian
/// J with entry variance sigma_j²: the upper Marchenko-Pastur edge.
[[nodiscard]] inline double mp_lambda_max_mean(std::size_t d, std::size_t p, double sigma_j) {
    if (d == 0 || p == 0) throw InvalidInput("mp_lambda_max_mean: dimensions must be positive");
    const double edge = 1.0 + std::sqrt(static_cast<double>(d) / static_cast<double>(p));
    return sigma_j * sigma_j * static_cast<double>(p) * edge * edge;
}

}  // namespace eoslab
