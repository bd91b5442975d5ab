#pragma once

// Config-driven experiment runner behind the eos-lab tool.
//
// A config is one JSON object:
//   {"experiment": <kind>, "seed": 7, "workers": 1, "output_dir": "out",
//    "params": {...}}
// Every kind validates its whole parameter block before any work starts.
// Outputs are staged under temporary names and renamed into place only after
// the experiment finished, so a failed run leaves no result files behind.

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "eoslab/csv.hpp"
#include "eoslab/errors.hpp"
#include "eoslab/mode_space.hpp"
#include "eoslab/parallel.hpp"
#include "eoslab/quad_model.hpp"
#include "eoslab/reductions.hpp"
#include "eoslab/two_param.hpp"

namespace eoslab {

inline constexpr const char* kVersion = "0.1.0";

using json = nlohmann::json;

struct FieldError {
    std::string field;
    std::string message;
};

/// Invalid configuration. Lists every offending field.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<FieldError> fields)
        : Error(summarize(fields)), fields_(std::move(fields)) {}

    [[nodiscard]] const std::vector<FieldError>& fields() const noexcept { return fields_; }

private:
    static std::string summarize(const std::vector<FieldError>& f) {
        std::string s = "invalid config:";
        for (const auto& e : f) s += " " + e.field + " (" + e.message + ");";
        return s;
    }
    std::vector<FieldError> fields_;
};

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds{
        "two-param-trajectory", "two-param-nullclines", "y-eps-scan", "mode-space-run", "quad-gd-run",
        "quad-gf-run",          "theorem2-stats",       "rnl-check",  "phase-sweep",    "linear-net-reduction"};
    return kinds;
}

namespace detail {

/// Typed accessors over a JSON object that collect errors instead of
/// throwing, and remember which keys were read.
class ParamReader {
public:
    ParamReader(const json& obj, std::string prefix, std::vector<FieldError>& errors)
        : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {
        if (!obj_.is_object()) fail("", "must be a JSON object");
    }

    [[nodiscard]] bool has(const std::string& key) const { return obj_.is_object() && obj_.contains(key); }

    double real(const std::string& key, std::optional<double> def,
                const std::function<bool(double)>& ok = nullptr, const char* requirement = "") {
        used_.insert(key);
        if (!has(key)) {
            if (def) return *def;
            fail(key, "is required");
            return 0.0;
        }
        const json& v = obj_.at(key);
        if (!v.is_number()) {
            fail(key, "must be a number");
            return def.value_or(0.0);
        }
        const double x = v.get<double>();
        if (!std::isfinite(x) || (ok && !ok(x))) {
            fail(key, std::string("must be finite") + (*requirement ? std::string(" and ") + requirement : ""));
            return def.value_or(0.0);
        }
        return x;
    }

    std::uint64_t integer(const std::string& key, std::optional<std::uint64_t> def, std::uint64_t min = 0,
                          std::uint64_t max = std::numeric_limits<std::uint64_t>::max()) {
        used_.insert(key);
        if (!has(key)) {
            if (def) return *def;
            fail(key, "is required");
            return min;
        }
        const json& v = obj_.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            fail(key, "must be a nonnegative integer");
            return def.value_or(min);
        }
        const auto x = v.get<std::uint64_t>();
        if (x < min || x > max) {
            fail(key, "must lie in [" + std::to_string(min) + ", " + std::to_string(max) + "]");
            return def.value_or(min);
        }
        return x;
    }

    std::size_t size(const std::string& key, std::optional<std::size_t> def, std::size_t min = 0,
                     std::size_t max = std::numeric_limits<std::uint32_t>::max()) {
        return static_cast<std::size_t>(integer(key, def, min, max));
    }

    bool flag(const std::string& key, bool def) {
        used_.insert(key);
        if (!has(key)) return def;
        if (!obj_.at(key).is_boolean()) {
            fail(key, "must be a boolean");
            return def;
        }
        return obj_.at(key).get<bool>();
    }

    std::string choice(const std::string& key, const std::string& def, const std::vector<std::string>& options) {
        used_.insert(key);
        if (!has(key)) return def;
        const json& v = obj_.at(key);
        if (!v.is_string() || std::find(options.begin(), options.end(), v.get<std::string>()) == options.end()) {
            std::string all;
            for (const auto& o : options) all += (all.empty() ? "" : "|") + o;
            fail(key, "must be one of " + all);
            return def;
        }
        return v.get<std::string>();
    }

    std::vector<double> reals(const std::string& key, std::optional<std::vector<double>> def, std::size_t min_len = 1,
                              const std::function<bool(double)>& ok = nullptr, const char* requirement = "") {
        used_.insert(key);
        if (!has(key)) {
            if (def) return *def;
            fail(key, "is required");
            return {};
        }
        const json& v = obj_.at(key);
        if (!v.is_array()) {
            fail(key, "must be an array of numbers");
            return def.value_or(std::vector<double>{});
        }
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number() || !std::isfinite(e.get<double>()) || (ok && !ok(e.get<double>()))) {
                fail(key, std::string("entries must be finite numbers") +
                              (*requirement ? std::string(" and ") + requirement : ""));
                return def.value_or(std::vector<double>{});
            }
            out.push_back(e.get<double>());
        }
        if (out.size() < min_len) fail(key, "needs at least " + std::to_string(min_len) + " entries");
        return out;
    }

    /// Either an explicit array or {"min", "max", "n", "spacing": linear|log}.
    std::vector<double> grid(const std::string& key, std::vector<double> def,
                             const std::function<bool(double)>& ok = nullptr, const char* requirement = "") {
        if (has(key) && obj_.at(key).is_object()) {
            used_.insert(key);
            ParamReader g(obj_.at(key), prefix_ + key + ".", errors_);
            const double lo = g.real("min", std::nullopt, ok, requirement);
            const double hi = g.real("max", std::nullopt, ok, requirement);
            const std::size_t n = g.size("n", std::nullopt, 1, 10000);
            const std::string spacing = g.choice("spacing", "linear", {"linear", "log"});
            g.finish();
            if (spacing == "log" && !(lo > 0.0 && hi > 0.0)) fail(key, "log spacing needs positive bounds");
            if (hi < lo) fail(key, "max must not be below min");
            std::vector<double> out;
            for (std::size_t i = 0; i < n; ++i) {
                const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
                out.push_back(spacing == "log" ? lo * std::pow(hi / lo, f) : lo + (hi - lo) * f);
            }
            if (n > 1) out.back() = hi;
            return out;
        }
        return reals(key, std::move(def), 1, ok, requirement);
    }

    void mark(const std::string& key) { used_.insert(key); }

    /// Flags keys that no accessor asked for.
    void finish() {
        if (!obj_.is_object()) return;
        for (const auto& [k, v] : obj_.items())
            if (!used_.count(k)) fail(k, "is not a recognized parameter");
    }

    void fail(const std::string& key, const std::string& msg) {
        std::string field = prefix_ + key;
        if (!field.empty() && field.back() == '.') field.pop_back();
        errors_.push_back({field.empty() ? "<root>" : field, msg});
    }

private:
    const json& obj_;
    std::string prefix_;
    std::vector<FieldError>& errors_;
    std::set<std::string> used_;
};

inline bool positive(double x) { return x > 0.0; }
inline bool nonnegative(double x) { return x >= 0.0; }

inline std::string csv_string(const std::function<void(std::ostream&)>& fn) {
    std::ostringstream os;
    fn(os);
    return os.str();
}

}  // namespace detail

struct OutputFile {
    std::string name;
    std::string content;
};

struct ExperimentResult {
    std::vector<OutputFile> files;
    json summary = json::object();
};

struct RunContext {
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

/// A validated experiment, ready to run.
using PreparedExperiment = std::function<ExperimentResult(const RunContext&)>;

namespace detail {

inline ReducedModel read_reduced_model(ParamReader& r) {
    ReducedModel m;
    if (r.has("a")) {
        m.a = r.real("a", std::nullopt, [](double a) { return std::abs(a) >= 1.0; }, "|a| >= 1");
        if (r.has("eps")) r.fail("eps", "give either eps or a, not both");
    } else {
        const double eps = r.real("eps", std::nullopt, [](double e) { return e > 0.0 && e <= 1.0; }, "in (0, 1]");
        m.a = eps > 0.0 ? 1.0 / eps : 1.0;
    }
    m.e_const = r.real("e_const", 0.0);
    return m;
}

inline PreparedExperiment prepare_two_param_trajectory(ParamReader& r) {
    const ReducedModel m = read_reduced_model(r);
    const double z0 = r.real("z0", std::nullopt);
    const bool by_y = r.has("y0");
    std::optional<double> t0, y0;
    if (by_y) {
        y0 = r.real("y0", std::nullopt);
        if (r.has("t0")) r.fail("t0", "give either t0 or y0, not both");
    } else {
        t0 = r.real("t0", std::nullopt);
    }
    const std::size_t steps = r.size("steps", 1000, 1, 100'000'000);
    const std::size_t every = r.size("record_every", 1, 1);
    const double tol = r.real("tol", 0.0, nonnegative, ">= 0");
    return [=](const RunContext&) {
        const ReducedState s0 = by_y ? from_y(m, {z0, *y0}) : ReducedState{z0, *t0};
        const auto recs = reduced_trajectory(m, s0, steps, every, tol);
        ExperimentResult res;
        res.files.push_back({"trajectory.csv", csv_string([&](std::ostream& os) {
                                 CsvWriter w(os, {"step", "z_tilde", "T0", "y"});
                                 for (const auto& q : recs)
                                     w.fields(std::vector<std::string>{
                                         format_int(static_cast<std::int64_t>(q.step)), format_double(q.z_tilde),
                                         format_double(q.t0), format_double(q.y)});
                             })});
        res.summary = {{"a", m.a},
                       {"e_const", m.e_const},
                       {"initial", {{"z_tilde", s0.z_tilde}, {"t0", s0.t0}}},
                       {"final", {{"z_tilde", recs.back().z_tilde}, {"t0", recs.back().t0}}},
                       {"steps_run", recs.back().step}};
        return res;
    };
}

inline PreparedExperiment prepare_two_param_nullclines(ParamReader& r) {
    const ReducedModel m = read_reduced_model(r);
    const double zmin = r.real("z_min", -0.2, [](double z) { return std::abs(z) <= 0.5; }, "|z| <= 0.5");
    const double zmax = r.real("z_max", 0.2, [](double z) { return std::abs(z) <= 0.5; }, "|z| <= 0.5");
    const std::size_t n = r.size("n_points", 81, 2, 1'000'000);
    if (zmax <= zmin) r.fail("z_max", "must exceed z_min");
    if (m.a < 1.0) r.fail("a", "two-step nullclines need a >= 1");
    return [=](const RunContext&) {
        ExperimentResult res;
        const double eps = 1.0 / m.a;
        auto protect = [](auto&& f) {
            try {
                return f();
            } catch (const Error&) {
                return std::numeric_limits<double>::quiet_NaN();
            }
        };
        res.files.push_back({"nullclines.csv", csv_string([&](std::ostream& os) {
                                 CsvWriter w(os, {"z_tilde", "f_z", "f_T", "series_z", "series_T"});
                                 for (std::size_t i = 0; i < n; ++i) {
                                     const double z = zmin + (zmax - zmin) * static_cast<double>(i) /
                                                                 static_cast<double>(n - 1);
                                     w.row({z, protect([&] { return nullcline_two_step(m, z, Branch::z); }),
                                            protect([&] { return nullcline_two_step(m, z, Branch::t); }),
                                            protect([&] { return nullcline_series(eps, z, Branch::z); }),
                                            protect([&] { return nullcline_series(eps, z, Branch::t); })});
                                 }
                             })});
        res.summary = {{"a", m.a}, {"e_const", m.e_const}, {"n_points", n}};
        return res;
    };
}

struct YEpsRow {
    double eps = 0.0;
    ConvergenceResult map;
    double y_ode = 0.0;
    double y_low = 0.0;
    double y_star = 0.0;
};

/// Iterates the low-order two-step map until |z̃| < tol or the budget runs out.
[[nodiscard]] inline YState iterate_low_order(YState s, double eps, double tol, std::size_t max_steps) {
    for (std::size_t n = 0; n < max_steps && std::abs(s.z_tilde) >= tol; ++n) {
        s = low_order_step(s, eps);
        if (!std::isfinite(s.z_tilde) || !std::isfinite(s.y)) throw Divergence("low-order map diverged", n + 1);
    }
    return s;
}

inline PreparedExperiment prepare_y_eps_scan(ParamReader& r) {
    const auto eps_list = r.reals("eps", std::vector<double>{0.002, 0.005, 0.01, 0.02, 0.05}, 1,
                                  [](double e) { return e > 0.0 && e < 1.0; }, "in (0, 1)");
    const double z0 = r.real("z0", 0.1, [](double z) { return z != 0.0 && std::abs(z) <= 0.5; }, "0 < |z0| <= 0.5");
    const double y0 = r.real("y0", 0.005);
    const double tol = r.real("tol", 1e-10, positive, "> 0");
    const std::size_t max_steps = r.size("max_steps", 10'000'000, 1, 2'000'000'000);
    const double dt = r.real("ode_dt", 0.1, positive, "> 0");
    const double t_end = r.real("ode_t_end", 1e6, positive, "> 0");
    return [=](const RunContext& ctx) {
        const auto rows = parallel_map(eps_list.size(), ctx.workers, [&](std::size_t i) {
            const double eps = eps_list[i];
            const ReducedModel m = ReducedModel::from_eps(eps);
            YEpsRow row;
            row.eps = eps;
            ConvergenceOptions co;
            co.tol = tol;
            co.max_steps = max_steps;
            row.map = run_to_convergence(m, from_y(m, {z0, y0}), co);
            const auto ode = ode_integrate(z0, y0, eps, dt, t_end, std::numeric_limits<std::size_t>::max());
            row.y_ode = ode.back().y;
            row.y_low = iterate_low_order({z0, y0}, eps, tol, max_steps).y;
            row.y_star = y_star(eps);
            return row;
        });
        ExperimentResult res;
        res.files.push_back({"y_eps_scan.csv", csv_string([&](std::ostream& os) {
                                 CsvWriter w(os, {"eps", "y_final_map", "y_final_ode", "y_star", "y_final_low_order",
                                                  "map_steps", "map_verdict"});
                                 for (const auto& q : rows)
                                     w.fields(std::vector<std::string>{
                                         format_double(q.eps), format_double(q.map.y), format_double(q.y_ode),
                                         format_double(q.y_star), format_double(q.y_low),
                                         format_int(static_cast<std::int64_t>(q.map.steps)),
                                         std::string(to_string(q.map.verdict))});
                             })});
        res.summary = {{"z0", z0}, {"y0", y0}};
        return res;
    };
}

inline PreparedExperiment prepare_mode_space_run(ParamReader& r) {
    ModeState s;
    s.omega = r.reals("omega", std::nullopt);
    s.jsq = r.reals("jsq", std::nullopt, 1, nonnegative, ">= 0");
    s.z_tilde = r.real("z0", std::nullopt);
    const std::string mode = r.choice("mode", "gd", {"gd", "gf"});
    const std::size_t steps = r.size("steps", 1000, 1, 100'000'000);
    const double dt = r.real("dt", 1e-3, positive, "> 0");
    TrajectoryOptions opt;
    opt.record_every = r.size("record_every", 1, 1);
    opt.record_jsq = r.flag("record_jsq", false);
    if (s.omega.size() != s.jsq.size()) r.fail("jsq", "must have the same length as omega");
    for (std::size_t i = 1; i < s.omega.size(); ++i)
        if (s.omega[i] > s.omega[i - 1]) {
            r.fail("omega", "must be non-increasing");
            break;
        }
    return [=](const RunContext&) {
        const Trajectory traj = mode == "gd" ? run_gd(s, steps, opt) : integrate_gf(s, dt, steps, opt);
        ExperimentResult res;
        res.files.push_back({"trajectory.csv", csv_string([&](std::ostream& os) { write_csv(os, traj); })});
        const bool invertible = std::none_of(s.omega.begin(), s.omega.end(), [](double w) { return w == 0.0; });
        res.summary = {{"mode", mode}, {"records", traj.records.size()}};
        if (traj.diverged_at) res.summary["diverged_at"] = *traj.diverged_at;
        if (invertible) res.summary["e_initial"] = conserved_e(s);
        return res;
    };
}

struct QuadInitParams {
    std::size_t d = 0, p = 0;
    bool rescaled = true;
    double sz = 0.0, sj = 0.0, alpha = 1.0;
};

inline QuadInitParams read_quad_init(ParamReader& r, bool allow_rescaled) {
    QuadInitParams q;
    q.d = r.size("d", 60, 1, 512);
    q.p = r.size("p", 120, 1, 512);
    q.alpha = r.real("alpha", 1.0, positive, "> 0");
    const bool raw = r.has("sigma_z") || r.has("sigma_j") || !allow_rescaled;
    q.rescaled = !raw;
    if (raw) {
        q.sz = r.real("sigma_z", std::nullopt, nonnegative, ">= 0");
        q.sj = r.real("sigma_j", std::pow(static_cast<double>(q.d * q.p), -0.25), nonnegative, ">= 0");
        if (r.has("sigma_z_tilde")) r.fail("sigma_z_tilde", "cannot be combined with sigma_z");
        if (r.has("sigma_j_tilde")) r.fail("sigma_j_tilde", "cannot be combined with sigma_j");
    } else {
        q.sz = r.real("sigma_z_tilde", std::nullopt, nonnegative, ">= 0");
        q.sj = r.real("sigma_j_tilde", std::nullopt, nonnegative, ">= 0");
    }
    return q;
}

inline RandomInit make_init(const QuadInitParams& q, RngSpec rng) {
    if (q.rescaled) return init_random({q.d, q.p, q.sz, q.sj, q.alpha, rng});
    return init_raw(q.d, q.p, q.sz, q.sj, rng);
}

inline PreparedExperiment prepare_quad_gd_run(ParamReader& r) {
    const QuadInitParams q = read_quad_init(r, true);
    GdRunOptions opt;
    opt.alpha = q.alpha;
    opt.max_steps = r.size("steps", 10'000, 1, 100'000'000);
    opt.record_every = r.size("record_every", 1, 1);
    opt.converge_tol = r.real("tol", 1e-8, nonnegative, ">= 0");
    return [=](const RunContext& ctx) {
        const auto init = make_init(q, seed_derivation(ctx.seed, 0, 0));
        const auto traj = run_gd_zj(init.state, init.model.q_tensor, opt);
        ExperimentResult res;
        res.files.push_back({"trajectory.csv", csv_string([&](std::ostream& os) { write_csv(os, traj); })});
        res.summary = {{"verdict", to_string(traj.verdict)},
                       {"steps_run", traj.records.back().step},
                       {"lambda1_initial", traj.records.front().lambda1},
                       {"lambda1_final", traj.records.back().lambda1}};
        return res;
    };
}

inline PreparedExperiment prepare_quad_gf_run(ParamReader& r) {
    const QuadInitParams q = read_quad_init(r, false);
    const double dt = r.real("dt", 1e-3, positive, "> 0");
    const std::size_t steps = r.size("steps", 1000, 1, 100'000'000);
    const std::size_t every = r.size("record_every", 1, 1);
    return [=](const RunContext& ctx) {
        const auto init = make_init(q, seed_derivation(ctx.seed, 0, 0));
        const auto traj = gf_integrate_zj(init.state, init.model.q_tensor, dt, steps, every);
        ExperimentResult res;
        res.files.push_back({"trajectory.csv", csv_string([&](std::ostream& os) { write_csv(os, traj); })});
        res.summary = {{"lambda1_initial", traj.records.front().lambda1},
                       {"lambda1_final", traj.records.back().lambda1}};
        if (traj.diverged_at) res.summary["diverged_at"] = *traj.diverged_at;
        return res;
    };
}

inline PreparedExperiment prepare_theorem2_stats(ParamReader& r) {
    const std::size_t d = r.size("d", 60, 2, 512);
    const std::size_t p = r.size("p", 120, 1, 512);
    const auto sigmas = r.reals("sigma_z", std::vector<double>{0.25, 0.5, 1.0}, 1, nonnegative, ">= 0");
    const double sj = r.real("sigma_j", 0.0, nonnegative, ">= 0 (0 selects (D P)^(-1/4))");
    const std::size_t n_seeds = r.size("n_seeds", 500, 2, 1'000'000);
    const double fd_dt = r.real("fd_dt", 0.0, nonnegative, ">= 0 (0 selects the default)");
    return [=](const RunContext& ctx) {
        std::vector<SharpeningStats> stats;
        for (double sz : sigmas) {
            SharpeningSpec spec;
            spec.d = d;
            spec.p = p;
            spec.sigma_z = sz;
            spec.sigma_j = sj;
            spec.n_seeds = n_seeds;
            spec.fd_dt = fd_dt;
            spec.seed = ctx.seed;
            spec.workers = ctx.workers;
            stats.push_back(sharpening_stats(spec));
        }
        ExperimentResult res;
        res.files.push_back({"theorem2.csv", csv_string([&](std::ostream& os) {
                                 CsvWriter w(os, {"sigma_z", "sigma_j", "d", "p", "n_used", "n_discarded", "fd_dt",
                                                  "mean_lambda", "se_lambda", "mean_lambda_dot", "se_lambda_dot",
                                                  "mean_lambda_ddot", "se_lambda_ddot", "ratio", "se_ratio",
                                                  "sigma_z_sq", "closed_form_ddot"});
                                 for (std::size_t i = 0; i < stats.size(); ++i) {
                                     const auto& s = stats[i];
                                     w.row({sigmas[i], s.sigma_j, static_cast<double>(d), static_cast<double>(p),
                                            static_cast<double>(s.n_used), static_cast<double>(s.n_discarded),
                                            s.fd_dt, s.mean_lambda, s.se_lambda, s.mean_lambda_dot,
                                            s.se_lambda_dot, s.mean_lambda_ddot, s.se_lambda_ddot, s.ratio,
                                            s.se_ratio, sigmas[i] * sigmas[i], s.closed_form_ddot});
                                 }
                             })});
        res.summary = {{"n_seeds", n_seeds}};
        return res;
    };
}

inline PreparedExperiment prepare_rnl_check(ParamReader& r) {
    const std::size_t d = r.size("d", 64, 1, 512);
    const std::size_t p = r.size("p", 128, 1, 512);
    const double alpha = r.real("alpha", 1.0, positive, "> 0");
    const auto sigmas = r.reals("sigma_z", std::vector<double>{1.0 / 128.0, 1.0 / 64.0}, 1, positive, "> 0");
    const double sj = r.real("sigma_j", std::pow(static_cast<double>(d * p), -0.25), positive, "> 0");
    const std::size_t n = r.size("n_samples", 500, 1, 1'000'000);
    return [=](const RunContext& ctx) {
        ExperimentResult res;
        res.files.push_back({"rnl.csv", csv_string([&](std::ostream& os) {
                                 CsvWriter w(os, {"sigma_z", "alpha", "d", "p", "n_samples", "r_nl_empirical",
                                                  "r_nl_closed", "rel_error"});
                                 for (double sz : sigmas) {
                                     const double emp = r_nl_empirical({d, p, sz, sj, alpha, ctx.seed}, n, ctx.workers);
                                     const double closed = r_nl_closed(alpha, sz, d);
                                     w.row({sz, alpha, static_cast<double>(d), static_cast<double>(p),
                                            static_cast<double>(n), emp, closed, emp / closed - 1.0});
                                 }
                             })});
        return res;
    };
}

/// Default phase-diagram grid at D = 60, P = 120: σ̃_z log-spaced over
/// [0.1, 3] and σ̃_J² linear over [0.045, 0.45] (initial λ₁ below 2).
inline std::vector<double> default_sigma_z_tilde_grid() {
    std::vector<double> g;
    for (int i = 0; i < 10; ++i) g.push_back(0.1 * std::pow(30.0, i / 9.0));
    g.back() = 3.0;
    return g;
}

inline std::vector<double> default_sigma_j_tilde_sq_grid() {
    std::vector<double> g;
    for (int i = 1; i <= 10; ++i) g.push_back(0.045 * i);
    return g;
}

inline PreparedExperiment prepare_phase_sweep(ParamReader& r) {
    SweepSpec spec;
    spec.d = r.size("d", 60, 1, 512);
    spec.p = r.size("p", 120, 1, 512);
    spec.sigma_z_tilde = r.grid("sigma_z_tilde", default_sigma_z_tilde_grid(), nonnegative, ">= 0");
    if (r.has("sigma_j_tilde")) {
        spec.sigma_j_tilde = r.grid("sigma_j_tilde", {}, nonnegative, ">= 0");
        if (r.has("sigma_j_tilde_sq")) r.fail("sigma_j_tilde_sq", "cannot be combined with sigma_j_tilde");
    } else {
        for (double s2 : r.grid("sigma_j_tilde_sq", default_sigma_j_tilde_sq_grid(), nonnegative, ">= 0"))
            spec.sigma_j_tilde.push_back(std::sqrt(s2));
    }
    spec.n_seeds = r.size("n_seeds", 20, 1, 100'000);
    spec.max_steps = r.size("max_steps", 20'000, 1, 100'000'000);
    spec.converge_tol = r.real("tol", 1e-8, positive, "> 0");
    return [=](const RunContext& ctx) mutable {
        spec.seed = ctx.seed;
        spec.workers = ctx.workers;
        const auto cells = phase_sweep(spec);
        ExperimentResult res;
        res.files.push_back(
            {"phase_sweep.csv", csv_string([&](std::ostream& os) { write_csv(os, cells, spec.d, spec.p); })});
        res.summary = {{"median_over", "converged seeds only"},
                       {"alpha", 1.0},
                       {"max_steps", spec.max_steps},
                       {"converge_tol", spec.converge_tol},
                       {"divergence", "norm(z) > 1e6 * initial norm, or non-finite"}};
        return res;
    };
}

inline PreparedExperiment prepare_linear_net_reduction(ParamReader& r) {
    const std::size_t k = r.size("k", 3, 1, 64);
    std::vector<double> x;
    if (r.has("x")) {
        x = r.reals("x", std::nullopt);
        if (!x.empty() && norm2(x) == 0.0) r.fail("x", "must be nonzero");
    }
    const std::size_t n = r.has("x") ? x.size() : r.size("n", 4, 1, 64);
    const double scale = r.real("init_scale", 0.3, nonnegative, ">= 0");
    const double alpha = r.real("alpha", 0.05, positive, "> 0");
    const std::size_t steps = r.size("steps", 200, 1, 10'000'000);
    return [=](const RunContext& ctx) {
        LinearNetSpec spec;
        spec.k = k;
        spec.x = x.empty() ? gaussian_vector(n, 1.0, {ctx.seed, 1}) : x;
        spec.v0 = gaussian_vector(k, scale, {ctx.seed, 2});
        spec.u0 = gaussian_matrix(k, spec.n(), scale, {ctx.seed, 3});
        const auto built = build_quad_model(spec);
        const auto check = verify_spectrum(spec);

        ExperimentResult res;
        res.files.push_back({"spectrum.csv", csv_string([&](std::ostream& os) {
                                 CsvWriter w(os, {"index", "computed", "predicted"});
                                 for (std::size_t i = 0; i < check.computed.size(); ++i)
                                     w.row({static_cast<double>(i), check.computed[i], check.predicted[i]});
                             })});

        Vector theta = built.theta0;
        Vector v = spec.v0;
        Matrix u = spec.u0;
        ModeState ms = to_mode_state(spec, theta, alpha);
        double max_gap = 0.0, max_inv = 0.0;
        res.files.push_back({"trajectory.csv", csv_string([&](std::ostream& os) {
                                 CsvWriter w(os, {"step", "f_packed", "f_raw", "z_tilde_mode", "ntk",
                                                  "invariant_residual"});
                                 for (std::size_t t = 0;; ++t) {
                                     const double fp = forward(built.model, theta)[0];
                                     const double fr = network_output(spec.x, v, u);
                                     const double res_inv = catapult_invariant(spec, theta);
                                     const double ntk = ntk_lambda_max(jacobian(built.model, theta)).lambda1;
                                     max_gap = std::max(max_gap, std::abs(fp - fr));
                                     max_inv = std::max(max_inv, std::abs(res_inv));
                                     w.row({static_cast<double>(t), fp, fr, ms.z_tilde, ntk, res_inv});
                                     if (t == steps) break;
                                     theta = gd_step_theta(built.model, theta, alpha);
                                     std::tie(v, u) = raw_gd_step(spec.x, v, u, alpha);
                                     ms = gd_step(ms);
                                 }
                             })});
        const Spectrum pred = predicted_spectrum(spec);
        res.summary = {{"n", spec.n()},
                       {"k", spec.k},
                       {"p", spec.p()},
                       {"omega", pred.omega_plus},
                       {"multiplicities", {{"plus", pred.n_plus}, {"minus", pred.n_minus}, {"zero", pred.n_zero}}},
                       {"spectrum_max_error", check.max_error},
                       {"max_packed_vs_raw_gap", max_gap},
                       {"max_invariant_residual", max_inv}};
        return res;
    };
}

}  // namespace detail

struct ParsedConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string output_dir = "eos-lab-out";
    json echo;
    PreparedExperiment prepared;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::string> output_dir;
};

/// Validates the whole config and binds the experiment. Throws ConfigError
/// listing every problem found.
[[nodiscard]] inline ParsedConfig parse_config(const json& cfg, const Overrides& ov = {}) {
    std::vector<FieldError> errors;
    ParsedConfig out;
    detail::ParamReader top(cfg, "", errors);
    out.experiment = top.choice("experiment", "", experiment_kinds());
    if (!top.has("experiment")) top.fail("experiment", "is required");
    out.seed = top.integer("seed", 0);
    out.workers = top.size("workers", 1, 1, 1024);
    std::string dir_default = out.output_dir;
    if (top.has("output_dir")) {
        if (cfg.at("output_dir").is_string() && !cfg.at("output_dir").get<std::string>().empty())
            dir_default = cfg.at("output_dir").get<std::string>();
        else
            top.fail("output_dir", "must be a non-empty string");
    }
    top.mark("output_dir");
    out.output_dir = dir_default;

    static const json empty = json::object();
    const json& params = cfg.is_object() && cfg.contains("params") ? cfg.at("params") : empty;
    top.mark("params");
    top.finish();

    if (!out.experiment.empty()) {
        detail::ParamReader pr(params, "params.", errors);
        const std::string& k = out.experiment;
        if (k == "two-param-trajectory") out.prepared = detail::prepare_two_param_trajectory(pr);
        else if (k == "two-param-nullclines") out.prepared = detail::prepare_two_param_nullclines(pr);
        else if (k == "y-eps-scan") out.prepared = detail::prepare_y_eps_scan(pr);
        else if (k == "mode-space-run") out.prepared = detail::prepare_mode_space_run(pr);
        else if (k == "quad-gd-run") out.prepared = detail::prepare_quad_gd_run(pr);
        else if (k == "quad-gf-run") out.prepared = detail::prepare_quad_gf_run(pr);
        else if (k == "theorem2-stats") out.prepared = detail::prepare_theorem2_stats(pr);
        else if (k == "rnl-check") out.prepared = detail::prepare_rnl_check(pr);
        else if (k == "phase-sweep") out.prepared = detail::prepare_phase_sweep(pr);
        else out.prepared = detail::prepare_linear_net_reduction(pr);
        pr.finish();
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));

    if (ov.seed) out.seed = *ov.seed;
    if (ov.workers) {
        if (*ov.workers == 0) throw ConfigError(std::vector<FieldError>{{"--workers", "must be positive"}});
        out.workers = *ov.workers;
    }
    if (ov.output_dir) {
        if (ov.output_dir->empty()) throw ConfigError(std::vector<FieldError>{{"--output-dir", "must be non-empty"}});
        out.output_dir = *ov.output_dir;
    }
    out.echo = cfg;
    return out;
}

namespace detail {

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Writes every file under a temporary name, then renames them all. On any
/// failure the temporaries are removed and nothing is renamed.
inline void commit_outputs(const std::filesystem::path& dir, const std::vector<OutputFile>& files) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::pair<fs::path, fs::path>> staged;
    auto cleanup = [&] {
        std::error_code ec;
        for (const auto& [tmp, dst] : staged) fs::remove(tmp, ec);
    };
    try {
        for (const auto& f : files) {
            const fs::path dst = dir / f.name;
            const fs::path tmp = dir / (".tmp-" + f.name);
            staged.emplace_back(tmp, dst);
            std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
            os << f.content;
            os.close();
            if (!os) throw Error("failed to write " + tmp.string());
        }
        for (const auto& [tmp, dst] : staged) fs::rename(tmp, dst);
    } catch (...) {
        cleanup();
        throw;
    }
}

}  // namespace detail

struct RunReport {
    std::filesystem::path output_dir;
    std::vector<std::string> files;
    double wall_time_s = 0.0;
};

/// Runs a parsed config and writes its outputs plus metadata.json.
inline RunReport run_experiment(const ParsedConfig& cfg) {
    const auto started = std::chrono::system_clock::now();
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentResult res = cfg.prepared(RunContext{cfg.seed, cfg.workers});
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json meta = {{"experiment", cfg.experiment},
                 {"version", kVersion},
                 {"seed", cfg.seed},
                 {"workers", cfg.workers},
                 {"config", cfg.echo},
                 {"started_at", detail::utc_timestamp(started)},
                 {"wall_time_s", wall},
                 {"summary", res.summary}};
    json names = json::array();
    for (const auto& f : res.files) names.push_back(f.name);
    meta["outputs"] = names;
    res.files.push_back({"metadata.json", meta.dump(2) + "\n"});

    detail::commit_outputs(cfg.output_dir, res.files);
    RunReport rep;
    rep.output_dir = cfg.output_dir;
    for (const auto& f : res.files) rep.files.push_back(f.name);
    rep.wall_time_s = wall;
    return rep;
}

/// Machine-readable error report.
[[nodiscard]] inline json error_report(const std::string& kind, const std::string& message,
                                       const std::vector<FieldError>& fields = {}) {
    json j = {{"status", "error"}, {"kind", kind}, {"message", message}};
    if (!fields.empty()) {
        json arr = json::array();
        for (const auto& f : fields) arr.push_back({{"field", f.field}, {"message", f.message}});
        j["fields"] = arr;
    }
    return j;
}

}  // namespace eoslab
