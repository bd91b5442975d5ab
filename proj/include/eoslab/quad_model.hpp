#pragma once

// Quadratic regression model z(θ) = y + G θ + ½ Q(θ, θ) with D outputs and
// P parameters, and its exact closed dynamics in (z, J) with J = G + Q(θ, ·).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "eoslab/csv.hpp"
#include "eoslab/errors.hpp"
#include "eoslab/linalg.hpp"
#include "eoslab/parallel.hpp"
#include "eoslab/rng.hpp"
#include "eoslab/tensor.hpp"
#include "eoslab/verdict.hpp"

namespace eoslab {

struct QuadModel {
    Vector y_vec;  ///< D
    Matrix g_mat;  ///< D×P, row α is ∂z_α/∂θ at θ = 0
    QTensor q_tensor;

    [[nodiscard]] std::size_t d() const noexcept { return y_vec.size(); }
    [[nodiscard]] std::size_t p() const noexcept { return g_mat.cols(); }
};

inline void validate(const QuadModel& m) {
    if (m.y_vec.empty()) throw InvalidInput("QuadModel: empty output");
    if (m.g_mat.rows() != m.d()) throw InvalidInput("QuadModel: G row count must equal D");
    if (m.q_tensor.d_out() != m.d() || m.q_tensor.d_param() != m.p())
        throw InvalidInput("QuadModel: Q shape mismatch");
}

struct ZJState {
    Vector z;  ///< D
    Matrix j;  ///< D×P
};

inline void validate(const ZJState& s, const QTensor& q) {
    if (s.z.size() != q.d_out() || s.j.rows() != q.d_out() || s.j.cols() != q.d_param())
        throw InvalidInput("ZJState: shape mismatch with Q");
}

[[nodiscard]] inline Vector forward(const QuadModel& m, std::span<const double> theta) {
    validate(m);
    if (theta.size() != m.p()) throw InvalidInput("forward: theta length must equal P");
    Vector z = matvec(m.g_mat, theta);
    const Vector quad = contract_full(m.q_tensor, theta, theta);
    for (std::size_t a = 0; a < z.size(); ++a) z[a] += m.y_vec[a] + 0.5 * quad[a];
    return z;
}

[[nodiscard]] inline Matrix jacobian(const QuadModel& m, std::span<const double> theta) {
    validate(m);
    if (theta.size() != m.p()) throw InvalidInput("jacobian: theta length must equal P");
    Matrix j = contract_partial(m.q_tensor, theta);
    const auto g = m.g_mat.data();
    auto out = j.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += g[i];
    return j;
}

/// θ' = θ - α Jᵀ z
[[nodiscard]] inline Vector gd_step_theta(const QuadModel& m, std::span<const double> theta, double alpha) {
    if (!(alpha > 0.0)) throw InvalidInput("gd_step_theta: alpha must be positive");
    const Vector z = forward(m, theta);
    const Vector grad = matvec_t(jacobian(m, theta), z);
    Vector next(theta.begin(), theta.end());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= alpha * grad[i];
    return next;
}

/// (z, J) at θ.
[[nodiscard]] inline ZJState zj_at(const QuadModel& m, std::span<const double> theta) {
    return {forward(m, theta), jacobian(m, theta)};
}

/// One GD step in (z, J). With g = Jᵀz and M = Q(g, ·):
///   z' = z - α J g + ½ α² M g,   J' = J - α M.
[[nodiscard]] inline ZJState gd_step_zj(const ZJState& s, const QTensor& q, double alpha) {
    validate(s, q);
    const Vector g = matvec_t(s.j, s.z);
    Matrix m = contract_partial(q, g);
    const Vector jg = matvec(s.j, g);
    const Vector mg = matvec(m, g);
    ZJState next;
    next.z.resize(s.z.size());
    for (std::size_t a = 0; a < s.z.size(); ++a) next.z[a] = s.z[a] - alpha * jg[a] + 0.5 * alpha * alpha * mg[a];
    next.j = s.j;
    auto jd = next.j.data();
    const auto md = m.data();
    for (std::size_t i = 0; i < jd.size(); ++i) jd[i] -= alpha * md[i];
    return next;
}

struct NtkTop {
    double lambda1 = 0.0;
    Vector v1;
    double lambda2 = 0.0;  ///< 0 when D = 1
};

/// Top two eigenvalues of J Jᵀ and the leading eigenvector.
[[nodiscard]] inline NtkTop ntk_lambda_max(const Matrix& j) {
    if (j.rows() == 0) throw InvalidInput("ntk_lambda_max: empty Jacobian");
    if (j.rows() == 1) {
        const auto r = j.row(0);
        return {dot(r, r), {1.0}, 0.0};
    }
    const auto eig = sym_eigen(gram(j));
    NtkTop out;
    out.lambda1 = std::max(eig.values[0], 0.0);
    out.lambda2 = std::max(eig.values[1], 0.0);
    out.v1.resize(j.rows());
    for (std::size_t r = 0; r < j.rows(); ++r) out.v1[r] = eig.vectors(r, 0);
    return out;
}

[[nodiscard]] inline double loss(const ZJState& s) { return 0.5 * dot(s.z, s.z); }

struct QuadRecord {
    std::size_t step = 0;
    double time = 0.0;
    double loss = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

struct QuadTrajectory {
    std::vector<QuadRecord> records;
    bool continuous_time = false;
    Verdict verdict = Verdict::stalled;
    std::optional<std::size_t> diverged_at;
    ZJState final_state;
};

inline constexpr double kQuadDivergenceFactor = 1e6;

namespace detail {

inline QuadRecord quad_snapshot(const ZJState& s, std::size_t step, double time) {
    const NtkTop top = ntk_lambda_max(s.j);
    return {step, time, loss(s), top.lambda1, top.lambda2};
}

inline bool finite_state(const ZJState& s) {
    for (double v : s.z)
        if (!std::isfinite(v)) return false;
    for (double v : s.j.data())
        if (!std::isfinite(v)) return false;
    return true;
}

struct ZJDerivative {
    Vector dz;
    Matrix dj;
};

inline ZJDerivative gf_rhs_zj(const ZJState& s, const QTensor& q) {
    const Vector g = matvec_t(s.j, s.z);
    ZJDerivative d{matvec(s.j, g), contract_partial(q, g)};
    for (double& v : d.dz) v = -v;
    for (double& v : d.dj.data()) v = -v;
    return d;
}

inline ZJState axpy(const ZJState& s, const ZJDerivative& d, double h) {
    ZJState out = s;
    for (std::size_t a = 0; a < out.z.size(); ++a) out.z[a] += h * d.dz[a];
    auto jd = out.j.data();
    const auto dd = d.dj.data();
    for (std::size_t i = 0; i < jd.size(); ++i) jd[i] += h * dd[i];
    return out;
}

}  // namespace detail

/// One classical RK4 step of ż = -J Jᵀ z, J̇ = -Q(Jᵀz, ·). A negative `dt`
/// integrates backward.
[[nodiscard]] inline ZJState rk4_step_zj(const ZJState& s, const QTensor& q, double dt) {
    const auto k1 = detail::gf_rhs_zj(s, q);
    const auto k2 = detail::gf_rhs_zj(detail::axpy(s, k1, 0.5 * dt), q);
    const auto k3 = detail::gf_rhs_zj(detail::axpy(s, k2, 0.5 * dt), q);
    const auto k4 = detail::gf_rhs_zj(detail::axpy(s, k3, dt), q);
    ZJState out = s;
    for (std::size_t a = 0; a < out.z.size(); ++a)
        out.z[a] += dt / 6.0 * (k1.dz[a] + 2.0 * k2.dz[a] + 2.0 * k3.dz[a] + k4.dz[a]);
    auto jd = out.j.data();
    const auto d1 = k1.dj.data(), d2 = k2.dj.data(), d3 = k3.dj.data(), d4 = k4.dj.data();
    for (std::size_t i = 0; i < jd.size(); ++i) jd[i] += dt / 6.0 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i]);
    return out;
}

[[nodiscard]] inline QuadTrajectory gf_integrate_zj(const ZJState& s0, const QTensor& q, double dt, std::size_t steps,
                                                    std::size_t record_every = 1) {
    validate(s0, q);
    if (!(dt > 0.0)) throw InvalidInput("gf_integrate_zj: dt must be positive");
    if (record_every == 0) throw InvalidInput("gf_integrate_zj: record_every must be positive");
    QuadTrajectory traj;
    traj.continuous_time = true;
    traj.records.push_back(detail::quad_snapshot(s0, 0, 0.0));
    const double limit = kQuadDivergenceFactor * norm2(s0.z);
    ZJState s = s0;
    for (std::size_t n = 1; n <= steps; ++n) {
        s = rk4_step_zj(s, q, dt);
        if (!detail::finite_state(s)) throw Divergence("gf_integrate_zj: non-finite state", n);
        const bool diverged = norm2(s.z) > limit && limit > 0.0;
        if (n % record_every == 0 || n == steps || diverged)
            traj.records.push_back(detail::quad_snapshot(s, n, static_cast<double>(n) * dt));
        if (diverged) {
            traj.diverged_at = n;
            traj.verdict = Verdict::diverged;
            break;
        }
    }
    if (!traj.diverged_at) traj.verdict = Verdict::converged;
    traj.final_state = std::move(s);
    return traj;
}

struct GdRunOptions {
    double alpha = 1.0;
    std::size_t max_steps = 10'000;
    std::size_t record_every = 0;  ///< 0 records only the endpoints
    double converge_tol = 1e-8;    ///< on ‖z‖
    double divergence_factor = kQuadDivergenceFactor;
};

/// Iterates gd_step_zj until ‖z‖ < tol (converged), ‖z‖ exceeds
/// divergence_factor·‖z₀‖ or turns non-finite (diverged), or the budget runs
/// out (stalled).
[[nodiscard]] inline QuadTrajectory run_gd_zj(const ZJState& s0, const QTensor& q, GdRunOptions opt = {}) {
    validate(s0, q);
    if (!(opt.alpha > 0.0)) throw InvalidInput("run_gd_zj: alpha must be positive");
    QuadTrajectory traj;
    traj.records.push_back(detail::quad_snapshot(s0, 0, 0.0));
    const double limit = opt.divergence_factor * norm2(s0.z);
    ZJState s = s0;
    std::size_t n = 0;
    for (;;) {
        const double zn = norm2(s.z);
        if (zn < opt.converge_tol) {
            traj.verdict = Verdict::converged;
            break;
        }
        if (n >= opt.max_steps) {
            traj.verdict = Verdict::stalled;
            break;
        }
        s = gd_step_zj(s, q, opt.alpha);
        ++n;
        if (!detail::finite_state(s) || norm2(s.z) > limit) {
            traj.verdict = Verdict::diverged;
            traj.diverged_at = n;
            break;
        }
        if (opt.record_every != 0 && n % opt.record_every == 0)
            traj.records.push_back(detail::quad_snapshot(s, n, static_cast<double>(n)));
    }
    if (traj.records.back().step != n) {
        if (detail::finite_state(s)) {
            traj.records.push_back(detail::quad_snapshot(s, n, static_cast<double>(n)));
        } else {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            traj.records.push_back({n, static_cast<double>(n), nan, nan, nan});
        }
    }
    traj.final_state = std::move(s);
    return traj;
}

/// Columns: step[, time], loss, lambda1, lambda2.
inline void write_csv(std::ostream& out, const QuadTrajectory& traj) {
    std::vector<std::string> header{"step"};
    if (traj.continuous_time) header.emplace_back("time");
    header.insert(header.end(), {"loss", "lambda1", "lambda2"});
    CsvWriter w(out, header);
    for (const auto& r : traj.records) {
        std::vector<std::string> f{format_int(static_cast<std::int64_t>(r.step))};
        if (traj.continuous_time) f.push_back(format_double(r.time));
        f.push_back(format_double(r.loss));
        f.push_back(format_double(r.lambda1));
        f.push_back(format_double(r.lambda2));
        w.fields(f);
    }
}

// ---------------------------------------------------------------------------
// Random initialization

struct InitSpec {
    std::size_t d = 1;
    std::size_t p = 1;
    double sigma_z_tilde = 0.0;
    double sigma_j_tilde = 0.0;
    double alpha = 1.0;
    RngSpec rng;
};

namespace detail {

/// Independent sub-streams for z, J and Q of one initialization.
inline RngSpec substream(RngSpec spec, std::uint64_t k) {
    return {splitmix64_mix(spec.seed ^ splitmix64_mix(k * 0xD1B54A32D192ED03ULL + 1)), spec.stream_id};
}

}  // namespace detail

struct RandomInit {
    QuadModel model;  ///< at θ = 0: y = z₀, G = J₀
    ZJState state;
};

/// z ~ N(0, σ_z²), J ~ N(0, σ_J²) i.i.d., Q symmetrized with unit variance.
[[nodiscard]] inline RandomInit init_raw(std::size_t d, std::size_t p, double sigma_z, double sigma_j, RngSpec rng) {
    if (d == 0 || p == 0) throw InvalidInput("init: dimensions must be positive");
    if (!(sigma_z >= 0.0) || !(sigma_j >= 0.0) || !std::isfinite(sigma_z) || !std::isfinite(sigma_j))
        throw InvalidInput("init: sigmas must be finite and nonnegative");
    RandomInit out;
    out.state.z = gaussian_vector(d, sigma_z, detail::substream(rng, 0));
    out.state.j = gaussian_matrix(d, p, sigma_j, detail::substream(rng, 1));
    out.model.q_tensor = gaussian_qtensor(d, p, 1.0, detail::substream(rng, 2));
    out.model.y_vec = out.state.z;
    out.model.g_mat = out.state.j;
    return out;
}

/// Raw standard deviations behind a rescaled initialization:
/// σ_z = σ̃_z / (α D), σ_J = σ̃_J / (α^{1/2} (D P)^{1/4}).
[[nodiscard]] inline std::pair<double, double> raw_sigmas(const InitSpec& spec) {
    const double d = static_cast<double>(spec.d);
    const double p = static_cast<double>(spec.p);
    return {spec.sigma_z_tilde / (spec.alpha * d), spec.sigma_j_tilde / (std::sqrt(spec.alpha) * std::pow(d * p, 0.25))};
}

[[nodiscard]] inline RandomInit init_random(const InitSpec& spec) {
    if (spec.d == 0 || spec.p == 0) throw InvalidInput("InitSpec: dimensions must be positive");
    if (!(spec.alpha > 0.0) || !std::isfinite(spec.alpha)) throw InvalidInput("InitSpec: alpha must be positive");
    if (!(spec.sigma_z_tilde >= 0.0) || !(spec.sigma_j_tilde >= 0.0))
        throw InvalidInput("InitSpec: sigmas must be nonnegative");
    const auto [sz, sj] = raw_sigmas(spec);
    return init_raw(spec.d, spec.p, sz, sj, spec.rng);
}

// ---------------------------------------------------------------------------
// Nonlinearity ratio

[[nodiscard]] inline double r_nl_closed(double alpha, double sigma_z, std::size_t d) {
    return 0.5 * alpha * sigma_z * static_cast<double>(d);
}

struct RnlSpec {
    std::size_t d = 1;
    std::size_t p = 1;
    double sigma_z = 0.0;
    double sigma_j = 1.0;
    double alpha = 1.0;
    std::uint64_t seed = 0;
};

/// √(E‖½α² Q(Jᵀz, Jᵀz)‖² / E‖α J Jᵀ z‖²) over n_samples initializations.
[[nodiscard]] inline double r_nl_empirical(const RnlSpec& spec, std::size_t n_samples, std::size_t workers = 1) {
    if (n_samples == 0) throw InvalidInput("r_nl_empirical: n_samples must be at least 1");
    if (spec.sigma_z == 0.0) return 0.0;
    struct Terms {
        double quad = 0.0;
        double lin = 0.0;
    };
    const auto terms = parallel_map(n_samples, workers, [&](std::size_t i) {
        const auto init = init_raw(spec.d, spec.p, spec.sigma_z, spec.sigma_j, seed_derivation(spec.seed, 0, i));
        const Vector g = matvec_t(init.state.j, init.state.z);
        const Vector lin = matvec(init.state.j, g);
        const Vector quad = contract_full(init.model.q_tensor, g, g);
        const double a2 = spec.alpha * spec.alpha;
        return Terms{0.25 * a2 * a2 * dot(quad, quad), a2 * dot(lin, lin)};
    });
    double q = 0.0, l = 0.0;
    for (const auto& t : terms) {
        q += t.quad;
        l += t.lin;
    }
    if (l == 0.0) throw SingularModel("r_nl_empirical: linear term vanished");
    return std::sqrt(q / l);
}

// ---------------------------------------------------------------------------
// Sharpening at initialization

struct SharpeningSpec {
    std::size_t d = 60;
    std::size_t p = 120;
    double sigma_z = 0.5;
    double sigma_j = 0.0;  ///< 0 selects (D P)^{-1/4}
    std::size_t n_seeds = 500;
    double fd_dt = 0.0;  ///< 0 selects 1e-4 / mp_lambda_max_mean
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct SharpeningSample {
    double lambda = 0.0;
    double lambda_dot = 0.0;
    double lambda_ddot = 0.0;
    double gap = 0.0;
    bool discarded = false;
};

struct SharpeningStats {
    std::size_t n_used = 0;
    std::size_t n_discarded = 0;
    double fd_dt = 0.0;
    double sigma_j = 0.0;
    double mean_lambda = 0.0, se_lambda = 0.0;
    double mean_lambda_dot = 0.0, se_lambda_dot = 0.0;
    double mean_lambda_ddot = 0.0, se_lambda_ddot = 0.0;
    double ratio = 0.0, se_ratio = 0.0;  ///< mean λ̈ / mean λ
    double closed_form_ddot = 0.0;       ///< σ_z² σ_J² D P (P (1 + √(D/P))² + 1)
};

[[nodiscard]] inline double lambda_ddot_closed(std::size_t d, std::size_t p, double sigma_z, double sigma_j) {
    const double dd = static_cast<double>(d);
    const double pp = static_cast<double>(p);
    const double edge = 1.0 + std::sqrt(dd / pp);
    return sigma_z * sigma_z * sigma_j * sigma_j * dd * pp * (pp * edge * edge + 1.0);
}

/// λ_max(t) derivatives at t = 0 from a five-point stencil on RK4 gradient
/// flow run one and two steps of size h forward and backward.
[[nodiscard]] inline SharpeningSample sharpening_sample(const RandomInit& init, double h) {
    const QTensor& q = init.model.q_tensor;
    const ZJState& s0 = init.state;
    const ZJState p1 = rk4_step_zj(s0, q, h);
    const ZJState p2 = rk4_step_zj(p1, q, h);
    const ZJState m1 = rk4_step_zj(s0, q, -h);
    const ZJState m2 = rk4_step_zj(m1, q, -h);
    const NtkTop t0 = ntk_lambda_max(s0.j);
    const double l0 = t0.lambda1;
    const double lp1 = ntk_lambda_max(p1.j).lambda1;
    const double lp2 = ntk_lambda_max(p2.j).lambda1;
    const double lm1 = ntk_lambda_max(m1.j).lambda1;
    const double lm2 = ntk_lambda_max(m2.j).lambda1;
    SharpeningSample out;
    out.lambda = l0;
    // Written in differences so a constant λ gives exactly zero.
    out.lambda_dot = (8.0 * (lp1 - lm1) - (lp2 - lm2)) / (12.0 * h);
    out.lambda_ddot = (16.0 * ((lp1 - l0) + (lm1 - l0)) - ((lp2 - l0) + (lm2 - l0))) / (12.0 * h * h);
    out.gap = t0.lambda1 - t0.lambda2;
    out.discarded = out.gap < 10.0 * h * std::abs(out.lambda_dot);
    return out;
}

[[nodiscard]] inline SharpeningStats sharpening_stats(const SharpeningSpec& spec) {
    if (spec.d < 2 || spec.p == 0) throw InvalidInput("sharpening_stats: need D >= 2 and P >= 1");
    if (spec.n_seeds < 2) throw InvalidInput("sharpening_stats: need at least two seeds");
    if (!(spec.sigma_z >= 0.0) || !(spec.sigma_j >= 0.0) || !(spec.fd_dt >= 0.0))
        throw InvalidInput("sharpening_stats: parameters must be nonnegative");
    SharpeningStats st;
    st.sigma_j = spec.sigma_j > 0.0 ? spec.sigma_j
                                    : std::pow(static_cast<double>(spec.d * spec.p), -0.25);
    st.fd_dt = spec.fd_dt > 0.0 ? spec.fd_dt : 1e-4 / mp_lambda_max_mean(spec.d, spec.p, st.sigma_j);
    st.closed_form_ddot = lambda_ddot_closed(spec.d, spec.p, spec.sigma_z, st.sigma_j);

    const auto samples = parallel_map(spec.n_seeds, spec.workers, [&](std::size_t i) {
        const auto init = init_raw(spec.d, spec.p, spec.sigma_z, st.sigma_j, seed_derivation(spec.seed, 0, i));
        return sharpening_sample(init, st.fd_dt);
    });

    double sl = 0, sd = 0, sdd = 0;
    std::size_t n = 0;
    for (const auto& s : samples) {
        if (s.discarded) {
            ++st.n_discarded;
            continue;
        }
        ++n;
        sl += s.lambda;
        sd += s.lambda_dot;
        sdd += s.lambda_ddot;
    }
    st.n_used = n;
    if (n < 2) throw SingularModel("sharpening_stats: fewer than two usable seeds");
    const double nn = static_cast<double>(n);
    st.mean_lambda = sl / nn;
    st.mean_lambda_dot = sd / nn;
    st.mean_lambda_ddot = sdd / nn;
    double vl = 0, vd = 0, vdd = 0, cov = 0;
    for (const auto& s : samples) {
        if (s.discarded) continue;
        const double a = s.lambda - st.mean_lambda;
        const double b = s.lambda_dot - st.mean_lambda_dot;
        const double c = s.lambda_ddot - st.mean_lambda_ddot;
        vl += a * a;
        vd += b * b;
        vdd += c * c;
        cov += a * c;
    }
    const double denom = (nn - 1.0) * nn;
    st.se_lambda = std::sqrt(vl / denom);
    st.se_lambda_dot = std::sqrt(vd / denom);
    st.se_lambda_ddot = std::sqrt(vdd / denom);
    st.ratio = st.mean_lambda_ddot / st.mean_lambda;
    // Delta method for a ratio of correlated means.
    const double rel = st.se_lambda_ddot * st.se_lambda_ddot / (st.mean_lambda_ddot * st.mean_lambda_ddot) +
                       st.se_lambda * st.se_lambda / (st.mean_lambda * st.mean_lambda) -
                       2.0 * (cov / denom) / (st.mean_lambda_ddot * st.mean_lambda);
    st.se_ratio = st.mean_lambda_ddot == 0.0 ? 0.0 : std::abs(st.ratio) * std::sqrt(std::max(rel, 0.0));
    return st;
}

// ---------------------------------------------------------------------------
// Phase diagram

struct SweepSpec {
    std::vector<double> sigma_z_tilde;
    std::vector<double> sigma_j_tilde;
    std::size_t d = 60;
    std::size_t p = 120;
    std::size_t n_seeds = 20;
    std::size_t max_steps = 10'000;
    double converge_tol = 1e-8;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct SweepRun {
    Verdict verdict = Verdict::stalled;
    double lambda_initial = 0.0;
    double lambda_final = std::numeric_limits<double>::quiet_NaN();
    std::size_t steps = 0;
};

struct SweepCell {
    double sigma_z_tilde = 0.0;
    double sigma_j_tilde = 0.0;
    std::size_t n_seeds = 0;
    std::size_t n_converged = 0;
    std::size_t n_diverged = 0;
    std::size_t n_stalled = 0;
    std::optional<double> median_lambda_max;  ///< over converged seeds only
    double median_initial_lambda_max = 0.0;   ///< over all seeds
};

[[nodiscard]] inline double median(std::vector<double> v) {
    if (v.empty()) throw InvalidInput("median: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

[[nodiscard]] inline SweepRun sweep_run(const InitSpec& init_spec, std::size_t max_steps, double tol) {
    const auto init = init_random(init_spec);
    GdRunOptions opt;
    opt.alpha = 1.0;
    opt.max_steps = max_steps;
    opt.converge_tol = tol;
    const auto traj = run_gd_zj(init.state, init.model.q_tensor, opt);
    SweepRun r;
    r.verdict = traj.verdict;
    r.lambda_initial = traj.records.front().lambda1;
    r.steps = traj.records.back().step;
    if (traj.verdict != Verdict::diverged) r.lambda_final = traj.records.back().lambda1;
    return r;
}

/// Cell index is i_z * |σ̃_J| + i_j; each (cell, seed) draws from its own
/// stream, so results are independent of the worker count.
[[nodiscard]] inline std::vector<SweepCell> phase_sweep(const SweepSpec& spec) {
    if (spec.sigma_z_tilde.empty() || spec.sigma_j_tilde.empty()) throw InvalidInput("phase_sweep: empty grid");
    if (spec.n_seeds == 0) throw InvalidInput("phase_sweep: n_seeds must be positive");
    const std::size_t nj = spec.sigma_j_tilde.size();
    const std::size_t n_cells = spec.sigma_z_tilde.size() * nj;
    const auto runs = parallel_map(n_cells * spec.n_seeds, spec.workers, [&](std::size_t task) {
        const std::size_t cell = task / spec.n_seeds;
        const std::size_t seed = task % spec.n_seeds;
        InitSpec is;
        is.d = spec.d;
        is.p = spec.p;
        is.sigma_z_tilde = spec.sigma_z_tilde[cell / nj];
        is.sigma_j_tilde = spec.sigma_j_tilde[cell % nj];
        is.alpha = 1.0;
        is.rng = seed_derivation(spec.seed, cell, seed);
        return sweep_run(is, spec.max_steps, spec.converge_tol);
    });

    std::vector<SweepCell> cells(n_cells);
    for (std::size_t c = 0; c < n_cells; ++c) {
        SweepCell& cell = cells[c];
        cell.sigma_z_tilde = spec.sigma_z_tilde[c / nj];
        cell.sigma_j_tilde = spec.sigma_j_tilde[c % nj];
        cell.n_seeds = spec.n_seeds;
        std::vector<double> finals, initials;
        for (std::size_t s = 0; s < spec.n_seeds; ++s) {
            const SweepRun& r = runs[c * spec.n_seeds + s];
            initials.push_back(r.lambda_initial);
            switch (r.verdict) {
                case Verdict::converged:
                    ++cell.n_converged;
                    finals.push_back(r.lambda_final);
                    break;
                case Verdict::diverged: ++cell.n_diverged; break;
                case Verdict::stalled: ++cell.n_stalled; break;
            }
        }
        if (!finals.empty()) cell.median_lambda_max = median(finals);
        cell.median_initial_lambda_max = median(initials);
    }
    return cells;
}

/// Columns: sigma_z_tilde, sigma_j_tilde, d, p, n_seeds, n_converged,
/// n_diverged, n_stalled, median_lambda_max, median_initial_lambda_max.
/// median_lambda_max is left empty for cells without a converged seed.
inline void write_csv(std::ostream& out, const std::vector<SweepCell>& cells, std::size_t d, std::size_t p) {
    CsvWriter w(out, {"sigma_z_tilde", "sigma_j_tilde", "d", "p", "n_seeds", "n_converged", "n_diverged",
                      "n_stalled", "median_lambda_max", "median_initial_lambda_max"});
    auto i64 = [](std::size_t v) { return format_int(static_cast<std::int64_t>(v)); };
    for (const auto& c : cells) {
        const std::vector<std::string> f{format_double(c.sigma_z_tilde),
                                         format_double(c.sigma_j_tilde),
                                         i64(d),
                                         i64(p),
                                         i64(c.n_seeds),
                                         i64(c.n_converged),
                                         i64(c.n_diverged),
                                         i64(c.n_stalled),
                                         c.median_lambda_max ? format_double(*c.median_lambda_max) : std::string{},
                                         format_double(c.median_initial_lambda_max)};
        w.fields(f);
    }
}

}  // namespace eoslab
