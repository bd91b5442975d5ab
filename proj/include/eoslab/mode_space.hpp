#pragma once

// D = 1 quartic-loss model in the eigenbasis of Q, in learning-rate rescaled
// coordinates: residual z̃ = αz and squared Jacobian projections
// J̃ᵢ² = α (J·vᵢ)² onto the eigenvectors vᵢ of Q (eigenvalues ωᵢ).

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "eoslab/csv.hpp"
#include "eoslab/errors.hpp"
#include "eoslab/linalg.hpp"

namespace eoslab {

struct ModeState {
    double z_tilde = 0.0;
    Vector jsq;    ///< J̃ᵢ², nonnegative
    Vector omega;  ///< eigenvalues of Q, non-increasing

    [[nodiscard]] std::size_t size() const noexcept { return jsq.size(); }
};

/// Throws InvalidInput unless `s` satisfies the ModeState invariants.
inline void validate(const ModeState& s) {
    if (s.jsq.empty()) throw InvalidInput("ModeState: no modes");
    if (s.jsq.size() != s.omega.size()) throw InvalidInput("ModeState: jsq/omega length mismatch");
    if (!std::isfinite(s.z_tilde)) throw InvalidInput("ModeState: non-finite z_tilde");
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s.jsq[i]) || !std::isfinite(s.omega[i]))
            throw InvalidInput("ModeState: non-finite entry");
        if (s.jsq[i] < 0.0) throw InvalidInput("ModeState: negative jsq");
        if (i > 0 && s.omega[i] > s.omega[i - 1])
            throw InvalidInput("ModeState: omega must be non-increasing");
    }
}

namespace detail {

inline double ipow(double x, int k) {
    if (k < 0) return 1.0 / ipow(x, -k);
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

}  // namespace detail

/// T(k) = Σ ωᵢᵏ J̃ᵢ². T(0) is the rescaled NTK.
[[nodiscard]] inline double t_moment(const ModeState& s, int k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (k < 0 && s.omega[i] == 0.0)
            throw SingularModel("t_moment: negative order with a zero eigenvalue");
        sum += detail::ipow(s.omega[i], k) * s.jsq[i];
    }
    return sum;
}

/// E = T(-1) - 2 z̃, conserved by both GD and GF.
[[nodiscard]] inline double conserved_e(const ModeState& s) {
    return t_moment(s, -1) - 2.0 * s.z_tilde;
}

[[nodiscard]] inline double loss(const ModeState& s) noexcept { return 0.5 * s.z_tilde * s.z_tilde; }

struct ModeDerivative {
    double dz_tilde = 0.0;
    Vector djsq;
};

/// Gradient-flow vector field.
[[nodiscard]] inline ModeDerivative gf_rhs(const ModeState& s) {
    ModeDerivative d;
    d.dz_tilde = -s.z_tilde * t_moment(s, 0);
    d.djsq.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) d.djsq[i] = -2.0 * s.z_tilde * s.omega[i] * s.jsq[i];
    return d;
}

/// One gradient-descent step. Each squared projection is multiplied by
/// (1 - z̃ωᵢ)², so nonnegativity holds exactly.
[[nodiscard]] inline ModeState gd_step(const ModeState& s) {
    ModeState next;
    next.omega = s.omega;
    next.jsq.resize(s.size());
    const double z = s.z_tilde;
    next.z_tilde = z - z * t_moment(s, 0) + 0.5 * z * z * t_moment(s, 1);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = 1.0 - z * s.omega[i];
        next.jsq[i] = s.jsq[i] * f * f;
    }
    if (!std::isfinite(next.z_tilde)) throw Divergence("gd_step: non-finite z_tilde", 0);
    for (double v : next.jsq)
        if (!std::isfinite(v)) throw Divergence("gd_step: non-finite jsq", 0);
    return next;
}

/// Both sides of T_{t+1}(k) - T_t(k) = -z̃ (2 T(k+1) - z̃ T(k+2)).
[[nodiscard]] inline std::pair<double, double> t_recursion_check(const ModeState& s, int k) {
    const double lhs = t_moment(gd_step(s), k) - t_moment(s, k);
    const double z = s.z_tilde;
    const double rhs = -z * (2.0 * t_moment(s, k + 1) - z * t_moment(s, k + 2));
    return {lhs, rhs};
}

struct ModeRecord {
    std::size_t step = 0;
    double time = 0.0;
    double z_tilde = 0.0;
    double t0 = 0.0;
    double loss = 0.0;
    Vector jsq;  ///< empty unless requested
};

struct Trajectory {
    std::vector<ModeRecord> records;
    bool continuous_time = false;
    /// Step at which a divergence threshold was crossed, if any.
    std::optional<std::size_t> diverged_at;
};

struct TrajectoryOptions {
    std::size_t record_every = 1;
    bool record_jsq = false;
};

inline constexpr double kModeZDivergence = 1e6;
inline constexpr double kModeJsqDivergence = 1e12;

namespace detail {

inline ModeRecord snapshot(const ModeState& s, std::size_t step, double time, bool with_jsq) {
    ModeRecord r;
    r.step = step;
    r.time = time;
    r.z_tilde = s.z_tilde;
    r.t0 = t_moment(s, 0);
    r.loss = loss(s);
    if (with_jsq) r.jsq = s.jsq;
    return r;
}

inline bool past_threshold(const ModeState& s) {
    if (std::abs(s.z_tilde) > kModeZDivergence) return true;
    for (double v : s.jsq)
        if (v > kModeJsqDivergence) return true;
    return false;
}

inline void require_finite(const ModeState& s, std::size_t step) {
    if (!std::isfinite(s.z_tilde)) throw Divergence("non-finite z_tilde", step);
    for (double v : s.jsq)
        if (!std::isfinite(v)) throw Divergence("non-finite jsq", step);
}

/// Roundoff can push a squared projection slightly negative; anything below
/// -1e-8 cannot come from the exact flow.
inline void clamp_jsq(ModeState& s, std::size_t step) {
    for (double& v : s.jsq) {
        if (v < -1e-8) throw InternalError("negative jsq at step " + std::to_string(step));
        if (v < 0.0) v = 0.0;
    }
}

}  // namespace detail

/// Classical RK4 on the gradient-flow field with a fixed step `dt`.
[[nodiscard]] inline Trajectory integrate_gf(const ModeState& s0, double dt, std::size_t steps,
                                             TrajectoryOptions opt = {}) {
    validate(s0);
    if (!(dt > 0.0)) throw InvalidInput("integrate_gf: dt must be positive");
    if (opt.record_every == 0) throw InvalidInput("integrate_gf: record_every must be positive");

    Trajectory traj;
    traj.continuous_time = true;
    traj.records.push_back(detail::snapshot(s0, 0, 0.0, opt.record_jsq));

    auto axpy = [](const ModeState& s, const ModeDerivative& d, double h) {
        ModeState out = s;
        out.z_tilde += h * d.dz_tilde;
        for (std::size_t i = 0; i < out.size(); ++i) out.jsq[i] += h * d.djsq[i];
        return out;
    };

    ModeState s = s0;
    for (std::size_t n = 1; n <= steps; ++n) {
        const ModeDerivative k1 = gf_rhs(s);
        const ModeDerivative k2 = gf_rhs(axpy(s, k1, 0.5 * dt));
        const ModeDerivative k3 = gf_rhs(axpy(s, k2, 0.5 * dt));
        const ModeDerivative k4 = gf_rhs(axpy(s, k3, dt));
        s.z_tilde += dt / 6.0 * (k1.dz_tilde + 2.0 * k2.dz_tilde + 2.0 * k3.dz_tilde + k4.dz_tilde);
        for (std::size_t i = 0; i < s.size(); ++i)
            s.jsq[i] += dt / 6.0 * (k1.djsq[i] + 2.0 * k2.djsq[i] + 2.0 * k3.djsq[i] + k4.djsq[i]);

        detail::require_finite(s, n);
        detail::clamp_jsq(s, n);
        const bool diverged = detail::past_threshold(s);
        if (n % opt.record_every == 0 || n == steps || diverged)
            traj.records.push_back(detail::snapshot(s, n, static_cast<double>(n) * dt, opt.record_jsq));
        if (diverged) {
            traj.diverged_at = n;
            break;
        }
    }
    return traj;
}

/// Iterates gd_step, halting early if a divergence threshold is crossed.
[[nodiscard]] inline Trajectory run_gd(const ModeState& s0, std::size_t steps,
                                       TrajectoryOptions opt = {}) {
    validate(s0);
    if (opt.record_every == 0) throw InvalidInput("run_gd: record_every must be positive");
    Trajectory traj;
    traj.records.push_back(detail::snapshot(s0, 0, 0.0, opt.record_jsq));
    ModeState s = s0;
    for (std::size_t n = 1; n <= steps; ++n) {
        try {
            s = gd_step(s);
        } catch (const Divergence&) {
            throw Divergence("run_gd: non-finite state", n);
        }
        const bool diverged = detail::past_threshold(s);
        if (n % opt.record_every == 0 || n == steps || diverged)
            traj.records.push_back(detail::snapshot(s, n, static_cast<double>(n), opt.record_jsq));
        if (diverged) {
            traj.diverged_at = n;
            break;
        }
    }
    return traj;
}

/// Columns: step[, time], z_tilde, T0, loss[, jsq_0 ...].
inline void write_csv(std::ostream& out, const Trajectory& traj) {
    std::vector<std::string> header{"step"};
    if (traj.continuous_time) header.emplace_back("time");
    header.insert(header.end(), {"z_tilde", "T0", "loss"});
    const std::size_t njsq = traj.records.empty() ? 0 : traj.records.front().jsq.size();
    for (std::size_t i = 0; i < njsq; ++i) header.push_back("jsq_" + std::to_string(i));
    CsvWriter w(out, header);
    for (const auto& r : traj.records) {
        std::vector<std::string> f{format_int(static_cast<std::int64_t>(r.step))};
        if (traj.continuous_time) f.push_back(format_double(r.time));
        f.push_back(format_double(r.z_tilde));
        f.push_back(format_double(r.t0));
        f.push_back(format_double(r.loss));
        for (double v : r.jsq) f.push_back(format_double(v));
        w.fields(f);
    }
}

}  // namespace eoslab
