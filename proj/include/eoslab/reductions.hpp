#pragma once

// One-hidden-layer linear network f(x) = vᵀ U x on a single input, written
// as a D = 1 quadratic model. f is exactly ½ θᵀ Q θ, so y = 0 and G = 0.
//
// Packing: θ = (v_1..v_K, U_11..U_1N, U_21..U_KN), row-major in U.

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "eoslab/errors.hpp"
#include "eoslab/linalg.hpp"
#include "eoslab/mode_space.hpp"
#include "eoslab/quad_model.hpp"
#include "eoslab/tensor.hpp"

namespace eoslab {

struct LinearNetSpec {
    Vector x;  ///< N
    std::size_t k = 1;
    Vector v0;  ///< K
    Matrix u0;  ///< K×N

    [[nodiscard]] std::size_t n() const noexcept { return x.size(); }
    [[nodiscard]] std::size_t p() const noexcept { return k * (n() + 1); }
};

inline void validate(const LinearNetSpec& s) {
    if (s.x.empty()) throw InvalidInput("LinearNetSpec: empty input");
    if (s.k == 0) throw InvalidInput("LinearNetSpec: hidden width must be positive");
    if (s.v0.size() != s.k) throw InvalidInput("LinearNetSpec: v0 length must equal K");
    if (s.u0.rows() != s.k || s.u0.cols() != s.n()) throw InvalidInput("LinearNetSpec: u0 must be K×N");
}

[[nodiscard]] inline Vector pack(std::span<const double> v, const Matrix& u) {
    Vector theta(v.begin(), v.end());
    const auto d = u.data();
    theta.insert(theta.end(), d.begin(), d.end());
    return theta;
}

[[nodiscard]] inline std::pair<Vector, Matrix> unpack(std::span<const double> theta, std::size_t k, std::size_t n) {
    if (theta.size() != k * (n + 1)) throw InvalidInput("unpack: theta length must equal K(N+1)");
    Vector v(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(k));
    Matrix u(k, n);
    std::copy(theta.begin() + static_cast<std::ptrdiff_t>(k), theta.end(), u.data().begin());
    return {std::move(v), std::move(u)};
}

struct LinearNetModel {
    QuadModel model;
    Vector theta0;
};

/// Q[v_i][U_jk] = δ_ij x_k; all other entries vanish.
[[nodiscard]] inline LinearNetModel build_quad_model(const LinearNetSpec& s) {
    validate(s);
    const std::size_t k = s.k, n = s.n(), p = s.p();
    QTensor q(1, p);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t c = 0; c < n; ++c) q.set(0, i, k + i * n + c, s.x[c]);
    LinearNetModel out;
    out.model.y_vec = {0.0};
    out.model.g_mat = Matrix(1, p);
    out.model.q_tensor = std::move(q);
    out.theta0 = pack(s.v0, s.u0);
    return out;
}

[[nodiscard]] inline double network_output(std::span<const double> x, std::span<const double> v, const Matrix& u) {
    return dot(v, matvec(u, x));
}

/// One GD step on ½ f² directly in (v, U).
[[nodiscard]] inline std::pair<Vector, Matrix> raw_gd_step(std::span<const double> x, std::span<const double> v,
                                                           const Matrix& u, double alpha) {
    const Vector ux = matvec(u, x);
    const double f = dot(v, ux);
    Vector v2(v.begin(), v.end());
    Matrix u2 = u;
    for (std::size_t i = 0; i < v2.size(); ++i) {
        v2[i] -= alpha * f * ux[i];
        auto row = u2.row(i);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] -= alpha * f * v[i] * x[c];
    }
    return {std::move(v2), std::move(u2)};
}

struct Spectrum {
    double omega_plus = 0.0;
    double omega_minus = 0.0;
    std::size_t n_plus = 0;
    std::size_t n_minus = 0;
    std::size_t n_zero = 0;

    /// Non-increasing list with multiplicities.
    [[nodiscard]] Vector values() const {
        Vector out(n_plus, omega_plus);
        out.insert(out.end(), n_zero, 0.0);
        out.insert(out.end(), n_minus, omega_minus);
        return out;
    }
};

[[nodiscard]] inline Spectrum predicted_spectrum(const LinearNetSpec& s) {
    validate(s);
    const double r = norm2(s.x);
    return {r, -r, s.k, s.k, s.k * (s.n() - 1)};
}

struct SpectrumCheck {
    Vector computed;
    Vector predicted;
    double max_error = 0.0;
};

[[nodiscard]] inline SpectrumCheck verify_spectrum(const LinearNetSpec& s) {
    const auto built = build_quad_model(s);
    SpectrumCheck out;
    out.computed = sym_eigen(built.model.q_tensor.slice_matrix(0)).values;
    out.predicted = predicted_spectrum(s).values();
    for (std::size_t i = 0; i < out.computed.size(); ++i)
        out.max_error = std::max(out.max_error, std::abs(out.computed[i] - out.predicted[i]));
    return out;
}

/// Mode-space image of the network at θ with learning rate α: z̃ = α f,
/// J̃ᵢ² = α (J·vᵢ)² over the eigenvectors vᵢ of Q.
[[nodiscard]] inline ModeState to_mode_state(const LinearNetSpec& s, std::span<const double> theta, double alpha) {
    const auto built = build_quad_model(s);
    const auto eig = sym_eigen(built.model.q_tensor.slice_matrix(0));
    const Vector z = forward(built.model, theta);
    const Matrix j = jacobian(built.model, theta);
    ModeState ms;
    ms.z_tilde = alpha * z[0];
    ms.omega = eig.values;
    ms.jsq.resize(eig.values.size());
    const auto jr = j.row(0);
    for (std::size_t c = 0; c < eig.values.size(); ++c) {
        double proj = 0.0;
        for (std::size_t r = 0; r < jr.size(); ++r) proj += jr[r] * eig.vectors(r, c);
        ms.jsq[c] = alpha * proj * proj;
    }
    return ms;
}

/// ω⁻¹ (J₊² - J₋²) - 2 f at θ, with J± the Jacobian weight in the ±‖x‖
/// eigenspaces.
[[nodiscard]] inline double catapult_invariant(const LinearNetSpec& s, std::span<const double> theta) {
    const double omega = norm2(s.x);
    if (!(omega > 0.0)) throw SingularModel("catapult_invariant: input must be nonzero");
    const ModeState ms = to_mode_state(s, theta, 1.0);
    double jp = 0.0, jm = 0.0;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        if (ms.omega[i] > 0.5 * omega) jp += ms.jsq[i];
        else if (ms.omega[i] < -0.5 * omega) jm += ms.jsq[i];
    }
    return (jp - jm) / omega - 2.0 * ms.z_tilde;
}

/// Jacobian weight in the zero eigenspace of Q.
[[nodiscard]] inline double zero_mode_weight(const LinearNetSpec& s, std::span<const double> theta) {
    const double omega = norm2(s.x);
    const ModeState ms = to_mode_state(s, theta, 1.0);
    double w = 0.0;
    for (std::size_t i = 0; i < ms.size(); ++i)
        if (std::abs(ms.omega[i]) <= 0.5 * omega) w += ms.jsq[i];
    return w;
}

}  // namespace eoslab
