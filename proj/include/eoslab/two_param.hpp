#pragma once

// Two-parameter (P = 2) reduction of the mode-space dynamics onto (z̃, T(0)).
//
// The eigenvalues of Q are taken as {1, λ} with λ = -1/a, |a| >= 1. The EOS
// regime uses a = 1/ε, i.e. a small negative second eigenvalue -ε. The
// remaining degree of freedom is fixed by the conserved landscape constant E.

#include <boost/math/tools/toms748_solve.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eoslab/csv.hpp"
#include "eoslab/errors.hpp"
#include "eoslab/mode_space.hpp"
#include "eoslab/verdict.hpp"

namespace eoslab {

struct ReducedModel {
    double a = 1.0;        ///< eigenvalue parameter, second eigenvalue is -1/a
    double e_const = 0.0;  ///< landscape constant E

    [[nodiscard]] static ReducedModel from_eps(double eps, double e_const = 0.0) {
        if (!(eps > 0.0) || eps > 1.0) throw InvalidInput("ReducedModel: eps must lie in (0, 1]");
        return {1.0 / eps, e_const};
    }

    [[nodiscard]] double eps() const noexcept { return 1.0 / a; }
};

inline void validate(const ReducedModel& m) {
    if (!std::isfinite(m.a) || !std::isfinite(m.e_const)) throw InvalidInput("ReducedModel: non-finite");
    if (std::abs(m.a) < 1.0) throw InvalidInput("ReducedModel: |a| must be >= 1");
}

struct ReducedState {
    double z_tilde = 0.0;
    double t0 = 0.0;
};

struct YState {
    double z_tilde = 0.0;
    double y = 0.0;
};

[[nodiscard]] inline bool is_admissible(const ReducedModel& m, const ReducedState& s,
                                        double tol = 0.0) noexcept {
    const double c = 2.0 * s.z_tilde + m.e_const;
    const double slack = tol * (1.0 + std::abs(s.t0) + std::abs(c));
    if (m.a > 0.0) return s.t0 >= c - slack && s.t0 >= -c / m.a - slack;
    return s.t0 >= -c / m.a - slack && s.t0 <= c + slack;
}

/// The one-step polynomial map without validation or the admissibility
/// check. Closed-form nullclines can leave the cone, so their defining
/// properties are checked against this map.
[[nodiscard]] inline ReducedState one_step_map(const ReducedModel& m, const ReducedState& s) noexcept {
    const double a = m.a;
    const double e = m.e_const;
    const double z = s.z_tilde;
    const double t = s.t0;
    const double c = 2.0 * z + e;
    ReducedState next;
    next.z_tilde = z - z * t + (0.5 / a) * z * z * ((a - 1.0) * t + c);
    next.t0 = t - (2.0 / a) * z * (c + (a - 1.0) * t) + z * z * (t + ((1.0 - a) / (a * a)) * (t - c));
    return next;
}

namespace detail {

inline constexpr double kAdmissibleTol = 1e-12;

}  // namespace detail

/// One GD step in (z̃, T(0)).
[[nodiscard]] inline ReducedState one_step(const ReducedModel& m, const ReducedState& s) {
    validate(m);
    if (!std::isfinite(s.z_tilde) || !std::isfinite(s.t0)) throw InvalidInput("one_step: non-finite state");
    if (!is_admissible(m, s, detail::kAdmissibleTol))
        throw DomainError("one_step: state outside the admissibility cone");
    return one_step_map(m, s);
}

/// one_step applied twice.
[[nodiscard]] inline ReducedState two_step(const ReducedModel& m, const ReducedState& s) {
    return one_step(m, one_step(m, s));
}

/// Equivalent mode-space state with eigenvalues (1, -1/a).
[[nodiscard]] inline ModeState to_mode_state(const ReducedModel& m, const ReducedState& s) {
    validate(m);
    if (!is_admissible(m, s, detail::kAdmissibleTol))
        throw DomainError("to_mode_state: state outside the admissibility cone");
    const double c = 2.0 * s.z_tilde + m.e_const;  // T(-1)
    ModeState ms;
    ms.z_tilde = s.z_tilde;
    ms.omega = {1.0, -1.0 / m.a};
    const double j2 = (s.t0 - c) / (1.0 + m.a);
    const double j1 = (m.a * s.t0 + c) / (1.0 + m.a);
    ms.jsq = {std::max(j1, 0.0), std::max(j2, 0.0)};
    return ms;
}

[[nodiscard]] inline ReducedState from_mode_state(const ModeState& s) {
    return {s.z_tilde, t_moment(s, 0)};
}

/// One-step z̃ nullcline: z̃(2z̃ + E) / (2a - (a - 1) z̃).
[[nodiscard]] inline double nullcline_z_one_step(const ReducedModel& m, double z) {
    validate(m);
    const double den = 2.0 * m.a - (m.a - 1.0) * z;
    if (std::abs(den) < 1e-12) throw SingularNullcline("nullcline_z_one_step: vanishing denominator");
    return z * (2.0 * z + m.e_const) / den;
}

/// One-step T(0) nullcline.
[[nodiscard]] inline double nullcline_t_one_step(const ReducedModel& m, double z) {
    validate(m);
    const double a = m.a;
    const double den = (a * a - a + 1.0) * z - 2.0 * a * (a - 1.0);
    if (std::abs(den) < 1e-12) throw SingularNullcline("nullcline_t_one_step: vanishing denominator");
    return -((a - 1.0) * z - 2.0 * a) / den * (2.0 * z + m.e_const);
}

enum class Branch { z, t };

[[nodiscard]] constexpr std::string_view to_string(Branch b) noexcept { return b == Branch::z ? "z" : "T"; }

/// Quadratic series of the two-step nullclines through (0, 2) for E = 0:
///   f_z(z̃) = 2 + 2(1-ε) z̃ + 2(1-ε+ε²) z̃²
///   f_T(z̃) = 2 + (2-3ε+2ε²)/(1-ε) z̃ + (4-ε+4ε²)/2 z̃²
[[nodiscard]] inline double nullcline_series(double eps, double z, Branch which) {
    if (which == Branch::z) return 2.0 + 2.0 * (1.0 - eps) * z + 2.0 * (1.0 - eps + eps * eps) * z * z;
    if (eps == 1.0) throw SingularNullcline("nullcline_series: T-branch is singular at eps = 1");
    return 2.0 + (2.0 - 3.0 * eps + 2.0 * eps * eps) / (1.0 - eps) * z +
           0.5 * (4.0 - eps + 4.0 * eps * eps) * z * z;
}

struct NullclineOptions {
    double radius = 0.5;          ///< largest |z̃| accepted
    double series_cutoff = 1e-8;  ///< below this |z̃| the series value is returned
    int max_widenings = 8;
    double widen_factor = 4.0;
};

/// Two-step nullcline through (0, 2), found by bracketing the root in T of
/// the composed map's z̃ (or T) increment, divided by z̃.
[[nodiscard]] inline double nullcline_two_step(const ReducedModel& m, double z, Branch which,
                                               NullclineOptions opt = {}) {
    validate(m);
    if (m.a < 1.0) throw InvalidInput("nullcline_two_step: requires eps = 1/a in (0, 1]");
    if (!(std::abs(z) <= opt.radius)) throw InvalidInput("nullcline_two_step: |z| exceeds radius");
    const double eps = m.eps();
    if (which == Branch::t && eps == 1.0) throw SingularNullcline("nullcline_two_step: T-branch at eps = 1");
    const double center = nullcline_series(eps, z, which);
    if (std::abs(z) < opt.series_cutoff) return center;

    auto increment = [&](double t) {
        const ReducedState s{z, t};
        const ReducedState s2 = one_step_map(m, one_step_map(m, s));
        return which == Branch::z ? (s2.z_tilde - z) / z : (s2.t0 - t) / z;
    };

    double half = 10.0 * z * z;
    double lo = center - half;
    double hi = center + half;
    for (int k = 0; k <= opt.max_widenings; ++k) {
        lo = center - half;
        hi = center + half;
        const double flo = increment(lo);
        const double fhi = increment(hi);
        if (flo == 0.0) return lo;
        if (fhi == 0.0) return hi;
        if ((flo < 0.0) != (fhi < 0.0)) {
            std::uintmax_t iters = 200;
            const auto r = boost::math::tools::toms748_solve(
                increment, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(52), iters);
            return 0.5 * (r.first + r.second);
        }
        half *= opt.widen_factor;
    }
    throw RootNotFound("nullcline_two_step: no sign change in bracket", lo, hi);
}

[[nodiscard]] inline YState to_y(const ReducedModel& m, const ReducedState& s, NullclineOptions opt = {}) {
    return {s.z_tilde, s.t0 - nullcline_two_step(m, s.z_tilde, Branch::z, opt)};
}

[[nodiscard]] inline ReducedState from_y(const ReducedModel& m, const YState& s, NullclineOptions opt = {}) {
    return {s.z_tilde, s.y + nullcline_two_step(m, s.z_tilde, Branch::z, opt)};
}

/// Lowest-order two-step dynamics in (z̃, y).
[[nodiscard]] inline YState low_order_step(const YState& s, double eps) noexcept {
    const double z = s.z_tilde;
    const double y = s.y;
    const double z2 = z * z;
    return {z + 2.0 * y * z, y - 2.0 * (4.0 - 3.0 * eps + 4.0 * eps * eps) * y * z2 - 4.0 * eps * z2};
}

/// Fixed point of the low-order y recursion: -ε / (2 - 3ε/2 + 2ε²).
[[nodiscard]] inline double y_star(double eps) noexcept {
    return -eps / (2.0 - 1.5 * eps + 2.0 * eps * eps);
}

struct YRecord {
    double time = 0.0;
    double z_tilde = 0.0;
    double y = 0.0;
};

struct YTrajectory {
    std::vector<YRecord> records;
    std::optional<std::size_t> diverged_at;

    [[nodiscard]] const YRecord& back() const { return records.back(); }
};

inline constexpr double kOdeFrozenZ = 1e-100;

/// RK4 on the continuous-time limit of the low-order dynamics:
///   dz̃/dt = 2 y z̃,  dy/dt = -2(4 - 3ε + 4ε²) y z̃² - 4ε z̃².
[[nodiscard]] inline YTrajectory ode_integrate(double z0, double y0, double eps, double dt, double t_end,
                                               std::size_t record_every = 1) {
    if (!(dt > 0.0)) throw InvalidInput("ode_integrate: dt must be positive");
    if (record_every == 0) throw InvalidInput("ode_integrate: record_every must be positive");
    const double c = 2.0 * (4.0 - 3.0 * eps + 4.0 * eps * eps);
    auto rhs = [&](double z, double y) { return std::pair{2.0 * y * z, -c * y * z * z - 4.0 * eps * z * z}; };

    YTrajectory traj;
    traj.records.push_back({0.0, z0, y0});
    const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
    double z = z0;
    double y = y0;
    for (std::size_t n = 1; n <= steps; ++n) {
        const auto [k1z, k1y] = rhs(z, y);
        const auto [k2z, k2y] = rhs(z + 0.5 * dt * k1z, y + 0.5 * dt * k1y);
        const auto [k3z, k3y] = rhs(z + 0.5 * dt * k2z, y + 0.5 * dt * k2y);
        const auto [k4z, k4y] = rhs(z + dt * k3z, y + dt * k3y);
        z += dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        if (!std::isfinite(z) || !std::isfinite(y)) throw Divergence("ode_integrate: non-finite state", n);
        const bool diverged = std::abs(z) > kModeZDivergence || std::abs(y) > kModeJsqDivergence;
        if (n % record_every == 0 || n == steps || diverged)
            traj.records.push_back({static_cast<double>(n) * dt, z, y});
        if (diverged) {
            traj.diverged_at = n;
            break;
        }
        // Both rates carry a factor z̃; past this point the state no longer
        // moves in double precision.
        if (std::abs(z) < kOdeFrozenZ) {
            if (n < steps) traj.records.push_back({static_cast<double>(steps) * dt, z, y});
            break;
        }
    }
    return traj;
}

struct ConvergenceResult {
    Verdict verdict = Verdict::stalled;
    double z_tilde = 0.0;
    double t0 = 0.0;
    double y = std::numeric_limits<double>::quiet_NaN();
    std::size_t steps = 0;
    double max_t0 = 0.0;  ///< largest T(0) seen along the way
};

struct ConvergenceOptions {
    double tol = 1e-10;
    std::size_t max_steps = 10'000'000;
};

inline constexpr double kReducedZDivergence = 1e6;
inline constexpr double kReducedTDivergence = 1e12;

/// Iterates one_step until |z̃| < tol, a divergence threshold, or the budget.
[[nodiscard]] inline ConvergenceResult run_to_convergence(const ReducedModel& m, const ReducedState& s0,
                                                          ConvergenceOptions opt = {}) {
    validate(m);
    if (!(opt.tol > 0.0)) throw InvalidInput("run_to_convergence: tol must be positive");
    if (!is_admissible(m, s0, detail::kAdmissibleTol))
        throw DomainError("run_to_convergence: initial state outside the admissibility cone");

    ConvergenceResult res;
    ReducedState s = s0;
    res.max_t0 = s.t0;
    std::size_t n = 0;
    for (;; ++n) {
        if (std::abs(s.z_tilde) < opt.tol) {
            res.verdict = Verdict::converged;
            break;
        }
        if (n >= opt.max_steps) {
            res.verdict = Verdict::stalled;
            break;
        }
        s = one_step_map(m, s);
        if (!std::isfinite(s.z_tilde) || !std::isfinite(s.t0) || std::abs(s.z_tilde) > kReducedZDivergence ||
            std::abs(s.t0) > kReducedTDivergence) {
            res.verdict = Verdict::diverged;
            ++n;
            break;
        }
        res.max_t0 = std::max(res.max_t0, s.t0);
    }
    res.z_tilde = s.z_tilde;
    res.t0 = s.t0;
    res.steps = n;
    if (res.verdict != Verdict::diverged && m.a >= 1.0) {
        try {
            res.y = to_y(m, s).y;
        } catch (const Error&) {
            // y stays NaN outside the nullcline's domain
        }
    }
    return res;
}

struct ReducedRecord {
    std::size_t step = 0;
    double z_tilde = 0.0;
    double t0 = 0.0;
    double y = std::numeric_limits<double>::quiet_NaN();
};

/// Records (step, z̃, T(0), y) every `record_every` steps for `steps` steps
/// or until |z̃| < tol / divergence.
[[nodiscard]] inline std::vector<ReducedRecord> reduced_trajectory(const ReducedModel& m, const ReducedState& s0,
                                                                   std::size_t steps, std::size_t record_every,
                                                                   double tol = 0.0) {
    validate(m);
    if (record_every == 0) throw InvalidInput("reduced_trajectory: record_every must be positive");
    if (!is_admissible(m, s0, detail::kAdmissibleTol))
        throw DomainError("reduced_trajectory: initial state outside the admissibility cone");
    auto record = [&](std::size_t n, const ReducedState& s) {
        ReducedRecord r{n, s.z_tilde, s.t0};
        if (m.a >= 1.0 && std::abs(s.z_tilde) <= NullclineOptions{}.radius) {
            try {
                r.y = to_y(m, s).y;
            } catch (const Error&) {
            }
        }
        return r;
    };
    std::vector<ReducedRecord> out{record(0, s0)};
    ReducedState s = s0;
    for (std::size_t n = 1; n <= steps; ++n) {
        s = one_step_map(m, s);
        const bool stop = !std::isfinite(s.z_tilde) || !std::isfinite(s.t0) ||
                          std::abs(s.z_tilde) > kReducedZDivergence || std::abs(s.t0) > kReducedTDivergence ||
                          std::abs(s.z_tilde) < tol;
        if (n % record_every == 0 || n == steps || stop) out.push_back(record(n, s));
        if (stop) break;
    }
    return out;
}

}  // namespace eoslab
