// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eoslab/mode_space.hpp"
#include "eoslab/quad_model.hpp"
#include "eoslab/reductions.hpp"
#include "eoslab/rng.hpp"
#include "eoslab/two_param.hpp"

using namespace eoslab;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------

Outcome fixed_point_scaling() {
    Outcome o;
    const std::vector<double> eps_list{0.002, 0.005, 0.01, 0.02, 0.05};
    std::vector<double> lx, ly;
    for (double eps : eps_list) {
        const ReducedModel m = ReducedModel::from_eps(eps);
        const auto r = run_to_convergence(m, from_y(m, {0.1, 0.005}), {1e-10, 10'000'000});
        const double dev = std::abs(r.y + eps / 2);
        std::printf("    eps=%-6g verdict=%s steps=%zu y=%.10f |y+eps/2|/eps^2=%.4f\n", eps,
                    std::string(to_string(r.verdict)).c_str(), r.steps, r.y, dev / (eps * eps));
        o.require(r.verdict == Verdict::converged, fmt("eps=%g did not converge", eps));
        o.require(dev <= 2 * eps * eps, fmt("eps=%g: |y+eps/2| = %.3g > 2 eps^2", eps, dev));
        lx.push_back(std::log(eps));
        ly.push_back(std::log(dev));
    }
    const double n = static_cast<double>(lx.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i] / n;
        my += ly[i] / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    const double slope = sxy / sxx;
    o.require(std::abs(slope - 2.0) <= 0.3, fmt("log-log slope %.3f outside 2.0 +- 0.3", slope));
    if (o.pass) o.detail = fmt("all 5 eps converge, |y+eps/2| <= 2 eps^2, slope %.3f", slope);
    return o;
}

Outcome eos_band() {
    Outcome o;
    const double eps = 5e-3;
    const ReducedModel m = ReducedModel::from_eps(eps);
    int n = 0;
    double lo = 10, hi = -10;
    for (double z0 : {-0.15, -0.2, -0.25, -0.3, -0.35})
        for (double t0 : {1.7, 1.8, 1.9, 1.95}) {
            ++n;
            const auto r = run_to_convergence(m, {z0, t0});
            o.require(r.verdict == Verdict::converged, fmt("(%g, %g) did not converge", z0, t0));
            o.require(r.t0 <= 2.0 && r.t0 >= 2.0 - 5 * eps, fmt("(%g, %g) final T0 %.6f", z0, t0, r.t0));
            o.require(r.max_t0 > t0, fmt("(%g, %g) never sharpened", z0, t0));
            lo = std::min(lo, r.t0);
            hi = std::max(hi, r.t0);
        }
    if (o.pass) o.detail = fmt("%d initializations, final T0 in [%.6f, %.6f] within [%.3f, 2]", n, lo, hi, 2 - 5 * eps);
    return o;
}

Outcome catapult_law() {
    Outcome o;
    const ReducedModel sym{1.0, 0.0};
    Rng rng({2024, 3});
    int tested = 0, bad = 0;
    while (tested < 10000) {
        const double z = 0.1 * (2 * rng.uniform() - 1);
        const double t = 0.5 + 5.5 * rng.uniform();
        if (!is_admissible(sym, {z, t}) || z == 0.0) continue;
        ++tested;
        const double dt = one_step(sym, {z, t}).t0 - t;
        if ((dt > 0) - (dt < 0) != (t > 4) - (t < 4)) ++bad;
    }
    o.require(bad == 0, fmt("%d of %d states violate the sign law", bad, tested));
    if (o.pass) o.detail = fmt("%d random admissible states, no violations", tested);
    return o;
}

Outcome nullcline_series_check() {
    Outcome o;
    double worst_series = 0, worst_gap = 0;
    for (double eps : {0.005, 0.05}) {
        const ReducedModel m = ReducedModel::from_eps(eps);
        for (double z : {0.005, 0.01, 0.02})
            for (Branch b : {Branch::z, Branch::t}) {
                const double err = std::abs(nullcline_two_step(m, z, b) - nullcline_series(eps, z, b));
                worst_series = std::max(worst_series, err / (z * z * z));
                o.require(err <= 10 * z * z * z, fmt("eps=%g z=%g %s-branch error %.3g", eps, z,
                                                     std::string(to_string(b)).c_str(), err));
            }
        for (int i = -50; i <= 50; ++i) {
            const double z = 0.001 * i;
            const double gap = std::abs(nullcline_two_step(m, z, Branch::z) - nullcline_two_step(m, z, Branch::t));
            const double bound = 3 * eps / (1 - eps) * std::abs(z);
            if (z != 0.0) worst_gap = std::max(worst_gap, gap / bound);
            o.require(gap <= bound, fmt("eps=%g z=%g gap %.3g > %.3g", eps, z, gap, bound));
        }
    }
    if (o.pass)
        o.detail = fmt("max series error %.3f z^3, max gap %.3f of bound", worst_series, worst_gap);
    return o;
}

Outcome sharpening_at_init() {
    Outcome o;
    std::ostringstream info;
    for (double sz : {0.25, 0.5, 1.0}) {
        SharpeningSpec spec;
        spec.d = 60;
        spec.p = 120;
        spec.sigma_z = sz;
        spec.n_seeds = 500;
        spec.seed = 5;
        spec.workers = workers();
        const auto st = sharpening_stats(spec);
        std::printf("    sigma_z=%g used=%zu discarded=%zu mean_lambda=%.5f mean_dot=%.4g (se %.3g) "
                    "mean_ddot=%.5g (se %.3g) closed_ddot=%.5g ratio=%.5g (se %.3g) target=%.4g\n",
                    sz, st.n_used, st.n_discarded, st.mean_lambda, st.mean_lambda_dot, st.se_lambda_dot,
                    st.mean_lambda_ddot, st.se_lambda_ddot, st.closed_form_ddot, st.ratio, st.se_ratio, sz * sz);
        o.require(std::abs(st.mean_lambda_dot) <= 3 * st.se_lambda_dot,
                  fmt("sz=%g mean lambda_dot %.3g exceeds 3 SE", sz, st.mean_lambda_dot));
        const double tol = std::max(3 * st.se_ratio, 0.1 * sz * sz);
        o.require(std::abs(st.ratio - sz * sz) <= tol,
                  fmt("sz=%g ratio %.4g vs %.4g (tol %.3g)", sz, st.ratio, sz * sz, tol));
        o.require(std::abs(st.mean_lambda_ddot - st.closed_form_ddot) <= 0.15 * st.closed_form_ddot,
                  fmt("sz=%g mean ddot %.4g vs closed form %.4g", sz, st.mean_lambda_ddot, st.closed_form_ddot));
    }
    if (o.pass) o.detail = "lambda_dot ~ 0, ratio and closed form within tolerance for all sigma_z";
    return o;
}

Outcome r_nl() {
    Outcome o;
    std::string vals;
    for (double sz : {1.0 / 128, 1.0 / 64}) {
        const RnlSpec spec{64, 128, sz, std::pow(64.0 * 128.0, -0.25), 1.0, 6};
        const double emp = r_nl_empirical(spec, 500, workers());
        const double closed = r_nl_closed(1.0, sz, 64);
        std::printf("    sigma_z=%g empirical=%.5f closed=%.5f ratio=%.4f\n", sz, emp, closed, emp / closed);
        o.require(std::abs(emp - closed) <= 0.1 * closed,
                  fmt("sz=%g empirical %.4f vs closed %.4f (%.1f%% off)", sz, emp, closed,
                      100 * std::abs(emp / closed - 1)));
        vals += fmt("%s%.4f/%.4f", vals.empty() ? "" : ", ", emp, closed);
    }
    if (o.pass) o.detail = "empirical/closed: " + vals;
    return o;
}

Outcome phase_diagram() {
    Outcome o;
    SweepSpec spec;
    for (int i = 0; i < 10; ++i) spec.sigma_z_tilde.push_back(0.1 * std::pow(30.0, i / 9.0));
    for (int i = 1; i <= 10; ++i) spec.sigma_j_tilde.push_back(std::sqrt(0.045 * i));
    spec.d = 60;
    spec.p = 120;
    spec.n_seeds = 20;
    spec.max_steps = 20'000;
    spec.seed = 7;
    spec.workers = workers();
    const auto cells = phase_sweep(spec);
    {
        std::ofstream os("acceptance_phase_sweep.csv");
        write_csv(os, cells, spec.d, spec.p);
    }
    auto cell = [&](std::size_t iz, std::size_t ij) -> const SweepCell& { return cells[iz * 10 + ij]; };
    for (std::size_t iz = 0; iz < 10; ++iz) {
        std::printf("    sz~=%.3f:", spec.sigma_z_tilde[iz]);
        for (std::size_t ij = 0; ij < 10; ++ij) {
            const auto& c = cell(iz, ij);
            if (c.median_lambda_max)
                std::printf(" %5.3f/%zu", *c.median_lambda_max, c.n_converged);
            else
                std::printf("   -- d%zu", c.n_diverged);
        }
        std::printf("\n");
    }
    // (a) σ̃_z ≈ 1 row, three smallest σ̃_J columns.
    for (std::size_t ij = 0; ij < 3; ++ij) {
        const auto& c = cell(6, ij);
        const bool ok = c.median_lambda_max && *c.median_lambda_max >= 1.9 && *c.median_lambda_max <= 2.0;
        o.require(ok, c.median_lambda_max
                          ? fmt("(a) sz~=%.3f sj~^2=%.3f median %.4f", c.sigma_z_tilde,
                                c.sigma_j_tilde * c.sigma_j_tilde, *c.median_lambda_max)
                          : fmt("(a) sz~=%.3f sj~^2=%.3f no converged seed (%zu diverged, %zu stalled)",
                                c.sigma_z_tilde, c.sigma_j_tilde * c.sigma_j_tilde, c.n_diverged, c.n_stalled));
    }
    // (b) smallest σ̃_z row.
    for (std::size_t ij = 0; ij < 10; ++ij) {
        const auto& c = cell(0, ij);
        const bool ok = c.median_lambda_max &&
                        std::abs(*c.median_lambda_max / c.median_initial_lambda_max - 1.0) <= 0.05;
        o.require(ok, c.median_lambda_max ? fmt("(b) sj~^2=%.3f final/initial %.3f", c.sigma_j_tilde * c.sigma_j_tilde,
                                                *c.median_lambda_max / c.median_initial_lambda_max)
                                          : fmt("(b) sj~^2=%.3f no converged seed", c.sigma_j_tilde * c.sigma_j_tilde));
    }
    // (c) largest corner.
    const auto& corner = cell(9, 9);
    const double frac = static_cast<double>(corner.n_diverged) / static_cast<double>(corner.n_seeds);
    o.require(frac > 0.5, fmt("(c) corner diverged fraction %.2f", frac));
    if (o.pass) o.detail = fmt("(a), (b), (c) hold; corner diverged fraction %.2f", frac);
    return o;
}

Outcome oracle_equivalences() {
    Outcome o;
    // D = 1 diagonal quad model vs mode space, 100 steps.
    {
        const Vector omega{1.2, 0.5, -0.3, -0.8};
        const Vector jt{0.7, -0.6, 0.5, 0.4};
        const double alpha = 0.6, z_tilde = 0.3;
        QTensor q(1, omega.size());
        for (std::size_t i = 0; i < omega.size(); ++i) q.set(0, i, i, omega[i]);
        ZJState s{{z_tilde / alpha}, Matrix(1, omega.size())};
        ModeState ms{z_tilde, {}, omega};
        for (std::size_t i = 0; i < omega.size(); ++i) {
            s.j(0, i) = jt[i] / std::sqrt(alpha);
            ms.jsq.push_back(jt[i] * jt[i]);
        }
        double worst = 0;
        for (int step = 0; step < 100; ++step) {
            s = gd_step_zj(s, q, alpha);
            ms = gd_step(ms);
            worst = std::max(worst, std::abs(alpha * s.z[0] - ms.z_tilde));
            for (std::size_t i = 0; i < omega.size(); ++i)
                worst = std::max(worst, std::abs(alpha * s.j(0, i) * s.j(0, i) - ms.jsq[i]));
        }
        o.require(worst <= 1e-10, fmt("quad vs mode space gap %.3g", worst));
    }
    // Reduced map vs two-mode GD, per step.
    {
        Rng rng({77, 1});
        double worst = 0;
        for (int trial = 0; trial < 2000; ++trial) {
            const ReducedModel m = ReducedModel::from_eps(0.001 + 0.999 * rng.uniform(), 0.4 * (2 * rng.uniform() - 1));
            const double z = 0.3 * (2 * rng.uniform() - 1);
            const double c = 2 * z + m.e_const;
            const ReducedState st{z, std::max(c, -c / m.a) + 3 * rng.uniform()};
            const ReducedState a = one_step(m, st);
            const ReducedState b = from_mode_state(gd_step(to_mode_state(m, st)));
            worst = std::max({worst, std::abs(a.z_tilde - b.z_tilde) / (1 + std::abs(a.z_tilde)),
                              std::abs(a.t0 - b.t0) / (1 + std::abs(a.t0))});
        }
        o.require(worst <= 1e-12, fmt("reduced vs mode space gap %.3g", worst));
    }
    // θ-space vs (z, J)-space GD, per step.
    {
        QuadModel m;
        m.y_vec = gaussian_vector(5, 0.3, {78, 1});
        m.g_mat = gaussian_matrix(5, 9, 0.3, {78, 2});
        m.q_tensor = gaussian_qtensor(5, 9, 0.3, {78, 3});
        Vector theta = gaussian_vector(9, 0.3, {78, 4});
        double worst = 0;
        for (int step = 0; step < 100; ++step) {
            const ZJState s = gd_step_zj(zj_at(m, theta), m.q_tensor, 0.2);
            theta = gd_step_theta(m, theta, 0.2);
            const ZJState ref = zj_at(m, theta);
            for (std::size_t a = 0; a < 5; ++a) worst = std::max(worst, std::abs(s.z[a] - ref.z[a]) / (1 + std::abs(ref.z[a])));
            for (std::size_t i = 0; i < ref.j.data().size(); ++i)
                worst = std::max(worst, std::abs(s.j.data()[i] - ref.j.data()[i]) / (1 + std::abs(ref.j.data()[i])));
        }
        o.require(worst <= 1e-12, fmt("theta vs (z, J) gap %.3g", worst));
    }
    if (o.pass) o.detail = "quad/mode <= 1e-10, reduced/mode <= 1e-12, theta/zj <= 1e-12";
    return o;
}

Outcome linear_net() {
    Outcome o;
    Rng rng({79, 0});
    double spec_err = 0, inv = 0, gd = 0;
    for (std::size_t k = 1; k <= 8; ++k)
        for (std::size_t n = 1; n <= 8; ++n) {
            LinearNetSpec s;
            s.k = k;
            for (std::size_t c = 0; c < n; ++c) s.x.push_back(rng.normal());
            for (std::size_t i = 0; i < k; ++i) s.v0.push_back(0.4 * rng.normal());
            s.u0 = Matrix(k, n);
            for (double& u : s.u0.data()) u = 0.4 * rng.normal();
            spec_err = std::max(spec_err, verify_spectrum(s).max_error);
            const auto built = build_quad_model(s);
            Vector theta = built.theta0;
            for (int step = 0; step < 20; ++step) {
                const double f = forward(built.model, theta)[0];
                inv = std::max(inv, std::abs(catapult_invariant(s, theta)) / (1 + std::abs(f)));
                const auto [v, u] = unpack(theta, k, n);
                const auto [v2, u2] = raw_gd_step(s.x, v, u, 0.05);
                const Vector raw = pack(v2, u2);
                theta = gd_step_theta(built.model, theta, 0.05);
                for (std::size_t i = 0; i < raw.size(); ++i)
                    gd = std::max(gd, std::abs(theta[i] - raw[i]) / (1 + std::abs(raw[i])));
            }
        }
    o.require(spec_err <= 1e-10, fmt("spectrum error %.3g", spec_err));
    o.require(inv <= 1e-10, fmt("invariant residual %.3g", inv));
    o.require(gd <= 1e-12, fmt("packed vs raw GD gap %.3g", gd));
    if (o.pass) o.detail = fmt("spectrum %.2g, invariant %.2g, GD gap %.2g", spec_err, inv, gd);
    return o;
}

Outcome conservation_numerics() {
    Outcome o;
    {
        ModeState s{0.2, {0.6, 0.5, 0.4}, {1.0, -0.5, 0.3}};
        const double e0 = conserved_e(s);
        const double scale = std::abs(t_moment(s, -1)) + 2 * std::abs(s.z_tilde) + std::abs(e0);
        double worst = 0;
        for (int step = 0; step < 10000; ++step) {
            s = gd_step(s);
            worst = std::max(worst, std::abs(conserved_e(s) - e0) / scale);
        }
        o.require(worst <= 1e-12, fmt("E drift %.3g", worst));
    }
    {
        QuadModel m;
        m.y_vec = gaussian_vector(4, 1.0, {80, 1});
        m.g_mat = gaussian_matrix(4, 7, 1.0, {80, 2});
        m.q_tensor = gaussian_qtensor(4, 7, 1.0, {80, 3});
        const Vector theta = gaussian_vector(7, 1.0, {80, 4});
        const Matrix j = jacobian(m, theta);
        double worst = 0;
        for (std::size_t i = 0; i < 7; ++i) {
            Vector tp = theta, tm = theta;
            tp[i] += 1e-5;
            tm[i] -= 1e-5;
            const Vector zp = forward(m, tp), zm = forward(m, tm);
            for (std::size_t a = 0; a < 4; ++a)
                worst = std::max(worst, std::abs((zp[a] - zm[a]) / 2e-5 - j(a, i)) / std::max(1.0, std::abs(j(a, i))));
        }
        o.require(worst <= 1e-6, fmt("Jacobian FD error %.3g", worst));
    }
    {
        double worst = 0;
        for (std::size_t n : {2, 5, 16, 64, 128}) {
            const SymMatrix a = SymMatrix::from_upper(gaussian_matrix(n, n, 1.0, {81, n}));
            const auto eig = sym_eigen(a);
            const double norm = a.matrix().frobenius();
            for (std::size_t k = 0; k < n; ++k) {
                double res = 0;
                for (std::size_t r = 0; r < n; ++r) {
                    double av = 0;
                    for (std::size_t c = 0; c < n; ++c) av += a(r, c) * eig.vectors(c, k);
                    res = std::max(res, std::abs(av - eig.values[k] * eig.vectors(r, k)));
                }
                worst = std::max(worst, res / norm);
            }
        }
        o.require(worst <= 1e-10, fmt("eigen residual %.3g", worst));
    }
    if (o.pass) o.detail = "E drift, Jacobian FD and eigen residuals within tolerance";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"fixed point y -> -eps/2 + O(eps^2)", fixed_point_scaling},
        {"EOS band at eps = 5e-3", eos_band},
        {"catapult sign law", catapult_law},
        {"two-step nullcline series", nullcline_series_check},
        {"sharpening at initialization", sharpening_at_init},
        {"nonlinearity ratio r_NL", r_nl},
        {"phase diagram", phase_diagram},
        {"oracle equivalences", oracle_equivalences},
        {"linear-net reduction", linear_net},
        {"conservation and numerics", conservation_numerics},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& [name, fn] = criteria[i];
        std::printf("criterion %zu (%s):\n", i + 1, name);
        std::fflush(stdout);
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        if (!o.pass) ++failures;
        std::printf("[%s] criterion %zu: %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
