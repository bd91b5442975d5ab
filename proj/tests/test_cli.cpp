#include <catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "eoslab/experiments.hpp"

using namespace eoslab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("eoslab-cli-test-" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p.parent_path());
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

struct Proc {
    int status = -1;
    std::string out;
};

/// Runs eos-lab with the given arguments, capturing stdout and stderr.
Proc run_bin(const std::string& args) {
    const char* bin = std::getenv("EOS_LAB_BIN");
    REQUIRE(bin != nullptr);
    const std::string cmd = std::string("\"") + bin + "\" " + args + " 2>&1";
    Proc p;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) p.out.append(buf.data(), n);
    const int raw = ::pclose(pipe);
    p.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& body) {
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream(p) << body;
    return p;
}

RunReport run_inline(const json& cfg, const fs::path& out) {
    return run_experiment(parse_config(cfg, {std::nullopt, std::nullopt, out.string()}));
}

std::vector<std::string> field_names(const ConfigError& e) {
    std::vector<std::string> out;
    for (const auto& f : e.fields()) out.push_back(f.field);
    return out;
}

}  // namespace

TEST_CASE("seed derivation", "[cli][seed]") {
    CHECK(seed_derivation(7, 0, 0) == seed_derivation(7, 0, 0));
    CHECK(seed_derivation(7, 0, 0).stream_id != seed_derivation(7, 0, 1).stream_id);
    CHECK(seed_derivation(7, 1, 0).stream_id != seed_derivation(7, 0, 1).stream_id);
    CHECK(seed_derivation(7, 3, 5).seed == 7);
    CHECK_THROWS_AS(seed_derivation(7, std::uint64_t{1} << 32, 0), InvalidInput);
    CHECK_THROWS_AS(seed_derivation(7, 0, std::uint64_t{1} << 32), InvalidInput);
}

TEST_CASE("config validation collects every offending field", "[cli][config]") {
    SECTION("missing experiment") {
        try {
            (void)parse_config(json::object());
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(field_names(e) == std::vector<std::string>{"experiment"});
        }
    }
    SECTION("unknown kind and stray keys") {
        try {
            (void)parse_config(json{{"experiment", "nope"}, {"sed", 3}, {"workers", 0}});
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const auto names = field_names(e);
            CHECK(std::find(names.begin(), names.end(), "experiment") != names.end());
            CHECK(std::find(names.begin(), names.end(), "sed") != names.end());
            CHECK(std::find(names.begin(), names.end(), "workers") != names.end());
        }
    }
    SECTION("parameter errors are reported alongside top-level ones") {
        const json cfg = {{"experiment", "y-eps-scan"},
                          {"output_dir", ""},
                          {"params", {{"eps", {0.01, 1.5}}, {"tol", -1}, {"bogus", true}}}};
        try {
            (void)parse_config(cfg);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const auto names = field_names(e);
            CHECK(names.size() >= 4);
            CHECK(std::find(names.begin(), names.end(), "output_dir") != names.end());
            CHECK(std::find(names.begin(), names.end(), "params.tol") != names.end());
            CHECK(std::find(names.begin(), names.end(), "params.bogus") != names.end());
        }
    }
    SECTION("type errors") {
        CHECK_THROWS_AS(parse_config(json{{"experiment", "rnl-check"}, {"params", {{"d", "large"}}}}), ConfigError);
        CHECK_THROWS_AS(parse_config(json{{"experiment", "rnl-check"}, {"params", {{"n_samples", 2.5}}}}),
                        ConfigError);
        CHECK_THROWS_AS(parse_config(json{{"experiment", "quad-gd-run"},
                                          {"params", {{"sigma_z", 0.1}, {"sigma_z_tilde", 1.0}}}}),
                        ConfigError);
        CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
    }
    SECTION("overrides win over the file") {
        const json cfg = {{"experiment", "rnl-check"}, {"seed", 1}, {"workers", 2}, {"output_dir", "a"}};
        const auto p = parse_config(cfg, {std::uint64_t{9}, std::size_t{3}, std::string("b")});
        CHECK(p.seed == 9);
        CHECK(p.workers == 3);
        CHECK(p.output_dir == "b");
        CHECK_THROWS_AS(parse_config(cfg, {std::nullopt, std::size_t{0}, std::nullopt}), ConfigError);
    }
}

TEST_CASE("every experiment kind runs with small parameters", "[cli][kinds]") {
    const fs::path root = scratch_dir("kinds");
    struct Case {
        json cfg;
        std::string file;
        std::string header_prefix;
    };
    const std::vector<Case> cases = {
        {{{"experiment", "two-param-trajectory"}, {"params", {{"eps", 0.05}, {"z0", 0.1}, {"y0", 0.005}, {"steps", 50}}}},
         "trajectory.csv",
         "step,z_tilde,T0,y"},
        {{{"experiment", "two-param-nullclines"}, {"params", {{"eps", 0.05}, {"n_points", 11}}}},
         "nullclines.csv",
         "z_tilde,f_z,f_T,series_z,series_T"},
        {{{"experiment", "y-eps-scan"}, {"params", {{"eps", {0.05}}, {"ode_t_end", 1000.0}}}},
         "y_eps_scan.csv",
         "eps,y_final_map,y_final_ode,y_star"},
        {{{"experiment", "mode-space-run"},
          {"params", {{"omega", {1.0, -1.0}}, {"jsq", {1.0, 1.0}}, {"z0", 0.1}, {"steps", 20}}}},
         "trajectory.csv",
         "step,z_tilde,T0,loss"},
        {{{"experiment", "quad-gd-run"},
          {"params", {{"d", 4}, {"p", 8}, {"sigma_z_tilde", 0.3}, {"sigma_j_tilde", 0.5}, {"steps", 30}}}},
         "trajectory.csv",
         "step,loss,lambda1,lambda2"},
        {{{"experiment", "quad-gf-run"},
          {"params", {{"d", 4}, {"p", 8}, {"sigma_z", 0.1}, {"steps", 30}, {"dt", 0.01}}}},
         "trajectory.csv",
         "step,time,loss,lambda1,lambda2"},
        {{{"experiment", "theorem2-stats"}, {"params", {{"d", 6}, {"p", 12}, {"n_seeds", 8}, {"sigma_z", {0.5}}}}},
         "theorem2.csv",
         "sigma_z,"},
        {{{"experiment", "rnl-check"}, {"params", {{"d", 8}, {"p", 16}, {"n_samples", 10}}}}, "rnl.csv", "sigma_z,"},
        {{{"experiment", "phase-sweep"},
          {"params",
           {{"d", 4}, {"p", 8}, {"n_seeds", 2}, {"max_steps", 200}, {"sigma_z_tilde", {0.1, 1.0}},
            {"sigma_j_tilde_sq", {0.1}}}}},
         "phase_sweep.csv",
         "sigma_z_tilde,sigma_j_tilde,d,p,n_seeds,n_converged,n_diverged,n_stalled,median_lambda_max"},
        {{{"experiment", "linear-net-reduction"}, {"params", {{"k", 2}, {"x", {3.0, 4.0}}, {"steps", 10}}}},
         "spectrum.csv",
         ""},
    };
    REQUIRE(cases.size() == experiment_kinds().size());
    for (const auto& c : cases) {
        const std::string kind = c.cfg.at("experiment");
        INFO(kind);
        const fs::path out = root / kind;
        const auto rep = run_inline(c.cfg, out);
        CHECK(fs::exists(out / c.file));
        CHECK(fs::exists(out / "metadata.json"));
        CHECK(first_line(out / c.file).rfind(c.header_prefix, 0) == 0);
        const json meta = json::parse(slurp(out / "metadata.json"));
        CHECK(meta.at("experiment") == kind);
        CHECK(meta.at("config") == c.cfg);
        CHECK(meta.contains("wall_time_s"));
        CHECK(meta.at("version") == kVersion);
        for (const auto& entry : fs::directory_iterator(out))
            CHECK(entry.path().filename().string().rfind(".tmp-", 0) == std::string::npos);
        CHECK(rep.files.back() == "metadata.json");
    }
    fs::remove_all(root);
}

TEST_CASE("runtime failures leave no outputs", "[cli][atomic]") {
    const fs::path out = scratch_dir("runtime");
    // An initial state outside the admissibility cone is rejected at run time.
    const json cfg = {{"experiment", "two-param-trajectory"}, {"params", {{"eps", 0.5}, {"z0", 0.1}, {"t0", -3.0}}}};
    CHECK_THROWS_AS(run_inline(cfg, out), Error);
    CHECK_FALSE(fs::exists(out / "trajectory.csv"));
    CHECK_FALSE(fs::exists(out / "metadata.json"));
    fs::remove_all(out);
}

TEST_CASE("eos-lab binary", "[cli][binary]") {
    const fs::path root = scratch_dir("binary");
    const fs::path cfgs = root / "configs";

    SECTION("success prints a JSON status line and writes outputs") {
        const auto cfg = write_config(cfgs, "ok.json",
                                      R"({"experiment": "two-param-nullclines", "params": {"eps": 0.05, "n_points": 5}})");
        const fs::path out = root / "ok";
        const Proc p = run_bin("run --config " + cfg.string() + " --output-dir " + out.string());
        CHECK(p.status == 0);
        const json status = json::parse(p.out);
        CHECK(status.at("status") == "ok");
        CHECK(fs::exists(out / "nullclines.csv"));
    }
    SECTION("malformed JSON exits nonzero without creating outputs") {
        const auto cfg = write_config(cfgs, "bad.json", R"({"experiment": "y-eps-scan", )");
        const fs::path out = root / "bad";
        const Proc p = run_bin("run --config " + cfg.string() + " --output-dir " + out.string());
        CHECK(p.status == 2);
        CHECK(json::parse(p.out).at("status") == "error");
        CHECK_FALSE(fs::exists(out));
    }
    SECTION("invalid fields are listed") {
        const auto cfg = write_config(cfgs, "invalid.json",
                                      R"({"experiment": "phase-sweep", "params": {"n_seeds": 0, "d": -1}})");
        const fs::path out = root / "invalid";
        const Proc p = run_bin("run --config " + cfg.string() + " --output-dir " + out.string());
        CHECK(p.status == 2);
        const json err = json::parse(p.out);
        CHECK(err.at("kind") == "validation");
        CHECK(err.at("fields").size() == 2);
        CHECK_FALSE(fs::exists(out));
    }
    SECTION("runtime errors exit with status 3 and no outputs") {
        const auto cfg = write_config(
            cfgs, "rt.json", R"({"experiment": "two-param-trajectory", "params": {"eps": 0.5, "z0": 0.1, "t0": -3}})");
        const fs::path out = root / "rt";
        const Proc p = run_bin("run --config " + cfg.string() + " --output-dir " + out.string());
        CHECK(p.status == 3);
        CHECK_FALSE(fs::exists(out / "trajectory.csv"));
    }
    SECTION("usage errors") {
        CHECK(run_bin("run").status == 2);
        CHECK(run_bin("run --config /nonexistent/config.json").status == 2);
        CHECK(run_bin("run --config x --workers many").status == 2);
    }
    SECTION("reruns and worker counts give identical CSV bytes") {
        const auto cfg = write_config(cfgs, "sweep.json", R"({"experiment": "phase-sweep", "seed": 11,
            "params": {"d": 4, "p": 8, "n_seeds": 3, "max_steps": 300,
                       "sigma_z_tilde": {"min": 0.1, "max": 2.0, "n": 3, "spacing": "log"},
                       "sigma_j_tilde_sq": [0.05, 0.3]}})");
        const Proc a = run_bin("run --config " + cfg.string() + " --output-dir " + (root / "a").string());
        const Proc b = run_bin("run --config " + cfg.string() + " --output-dir " + (root / "b").string());
        const Proc c = run_bin("run --config " + cfg.string() + " --workers 4 --output-dir " + (root / "c").string());
        REQUIRE(a.status == 0);
        REQUIRE(b.status == 0);
        REQUIRE(c.status == 0);
        const std::string body = slurp(root / "a" / "phase_sweep.csv");
        CHECK(body == slurp(root / "b" / "phase_sweep.csv"));
        CHECK(body == slurp(root / "c" / "phase_sweep.csv"));
        const Proc d = run_bin("run --config " + cfg.string() + " --seed 12 --output-dir " + (root / "d").string());
        REQUIRE(d.status == 0);
        CHECK(json::parse(slurp(root / "d" / "metadata.json")).at("seed") == 12);
        CHECK(json::parse(slurp(root / "c" / "metadata.json")).at("workers") == 4);
    }
    fs::remove_all(root);
}
