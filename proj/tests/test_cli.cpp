#include <doctest.h>

#include "drlab/cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace drlab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("drlab_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
}

std::string manifest_without_clock(const fs::path& p) {
    auto j = nlohmann::json::parse(slurp(p));
    REQUIRE(j.contains("wall_clock_seconds"));
    j.erase("wall_clock_seconds");
    return j.dump(2);
}

}  // namespace

TEST_CASE("config parsing: keys, comments, lists") {
    auto cfg = cli::parse_config_text(
        "# experiment\n"
        "model.m = 2\n"
        "model.star = 1:0.5, 2:0.5\n"
        "model.p = 0.15   # subcritical\n"
        "run.n_max = 120\n"
        "run.tau = 1e-16\n"
        "run.support_cap = 100000\n"
        "mc.count = 5000\n"
        "mc.seed = 42\n"
        "mc.workers = 3\n"
        "mc.node_budget = 1048576\n"
        "fit.epsilon_list = 0.04, 0.02\n"
        "fit.slope_band = 0.3, 0.8\n"
        "probe.n = 12\n"
        "probe.j = 3\n"
        "coupling.p_list = 0.1, 0.19\n"
        "critical.slope_window = 100, 400\n"
        "critical.product_window = 100, 800\n"
        "output.dir = results\n");
    CHECK(cfg.m == 2);
    REQUIRE(cfg.star.size() == 2);
    CHECK(cfg.star[1].first == 2);
    CHECK(cfg.star[1].second == 0.5);
    REQUIRE(cfg.p.has_value());
    CHECK(*cfg.p == 0.15);
    CHECK(!cfg.epsilon.has_value());
    CHECK(cfg.n_max == 120);
    CHECK(cfg.tau == 1e-16);
    CHECK(cfg.support_cap == 100000);
    CHECK(cfg.count == 5000);
    CHECK(cfg.seed == 42);
    CHECK(cfg.workers == 3);
    CHECK(cfg.node_budget == 1048576);
    CHECK(cfg.epsilon_list == std::vector<double>{0.04, 0.02});
    CHECK(cfg.slope_lo == 0.3);
    CHECK(cfg.slope_hi == 0.8);
    CHECK(cfg.probe_n == 12);
    CHECK(cfg.probe_j == 3);
    CHECK(cfg.coupling_p == std::vector<double>{0.1, 0.19});
    CHECK(cfg.slope_win_lo == 100);
    CHECK(cfg.slope_win_hi == 400);
    CHECK(cfg.product_win_lo == 100);
    CHECK(cfg.product_win_hi == 800);
    CHECK(cfg.out_dir == "results");

    auto spec = cfg.resolve_model();
    CHECK(spec.p == 0.15);
    CHECK(spec.p_c == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    auto pol = cfg.policy();
    CHECK(pol.tau == 1e-16);
    CHECK(pol.weight_base == 2);
    CHECK(pol.support_cap == 100000);
}

TEST_CASE("config rejections") {
    CHECK_THROWS_AS(cli::parse_config_text("model.p = 0.1\nmodel.epsilon = 0.05\n"),
                    cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text("bogus.key = 1\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text("run.tau = 1e-7\n"), cli::ConfigError);  // above 1e-8
    CHECK_THROWS_AS(cli::parse_config_text("run.tau = -1e-20\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text("model.m = 1\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text("model.m = x\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text("model.p\n"), cli::ConfigError);        // no '='
    CHECK_THROWS_AS(cli::parse_config_text("model.p =\n"), cli::ConfigError);      // empty
    CHECK_THROWS_AS(cli::parse_config_text("model.star = 2:0.5\n"), cli::ConfigError);  // sum != 1
    CHECK_THROWS_AS(cli::parse_config_text("model.star = 2;1\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text("mc.workers = 0\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text("coupling.p_list = 0.1, 1.5\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config_text("fit.slope_band = 0.8, 0.3\n"), cli::ConfigError);

    auto none = cli::parse_config_text("run.n_max = 5\n");
    CHECK_THROWS_AS(none.resolve_model(), cli::ConfigError);
    CHECK_NOTHROW(none.resolve_critical());
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.0, 0.0, 6.5e-17}) {
        std::string s = cli::format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(cli::format_double(0.1) == "0.1");
    CHECK(cli::format_double(0.0) == "0");
}

TEST_CASE("pc command writes the critical point") {
    fs::path dir = fresh_dir("pc");
    fs::path cfg = dir / "model.cfg";
    spit(cfg, "model.m = 2\nmodel.star = 2:1\nmodel.p = 0.15\n");
    int rc = cli::run({"pc", "--config", cfg.string(), "--out", (dir / "out").string()});
    CHECK(rc == 0);
    auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary["p_c"].get<double>() == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(summary["epsilon"].get<double>() == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(summary["pass"].get<bool>());
    auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
    CHECK(manifest["command"] == "pc");
    CHECK(manifest.contains("code_version"));
    CHECK(manifest.contains("wall_clock_seconds"));
    CHECK(!manifest["config"].contains("output.dir"));
    CHECK(!manifest["config"].contains("mc.workers"));
}

TEST_CASE("iterate command: exit code, trace shape, margins") {
    fs::path dir = fresh_dir("iterate");
    fs::path cfg = dir / "run.cfg";
    spit(cfg, "model.m = 2\nmodel.star = 2:1\nmodel.p = 0.15\nrun.n_max = 40\n");
    int rc = cli::run({"iterate", "--config", cfg.string(), "--out", (dir / "out").string()});
    CHECK(rc == 0);

    std::string trace = slurp(dir / "out" / "trace.csv");
    CHECK(trace.rfind("n,mean,survival,h_m,h1_m,delta,defect\n", 0) == 0);
    std::size_t lines = std::count(trace.begin(), trace.end(), '\n');
    CHECK(lines == 42);  // header + generations 0..40

    auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary["pass"].get<bool>());
    CHECK(summary["margins"]["delta_residual_scaled"].get<double>() <= 1e-9);
    CHECK(summary["margins"]["product_max"].get<double>() <= 4.0 * (1 + 1e-8));
    CHECK(summary["margins"]["product_bound"].get<double>() == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("cli maps failures onto exit codes") {
    fs::path dir = fresh_dir("codes");
    // 3: unreadable config
    CHECK(cli::run({"pc", "--config", (dir / "missing.cfg").string()}) == 3);
    // 3: bad config content
    fs::path bad = dir / "bad.cfg";
    spit(bad, "model.m = 1\n");
    CHECK(cli::run({"pc", "--config", bad.string(), "--out", (dir / "o1").string()}) == 3);
    // 3: config key rejected
    fs::path unk = dir / "unk.cfg";
    spit(unk, "model.q = 2\n");
    CHECK(cli::run({"iterate", "--config", unk.string(), "--out", (dir / "o2").string()}) == 3);
    // 3: CLI11 usage errors
    CHECK(cli::run({}) == 3);
    CHECK(cli::run({"bogus-command"}) == 3);
    CHECK(cli::run({"iterate"}) == 3);  // --config required
    // 4: node budget too small for the probe depth
    fs::path dev = dir / "dev.cfg";
    spit(dev, "model.m = 2\nmodel.star = 2:1\nprobe.n = 40\nprobe.j = 2\nmc.count = 10\n"
              "mc.node_budget = 1024\n");
    CHECK(cli::run({"deviation", "--config", dev.string(), "--out", (dir / "o3").string()}) == 4);
    // 0 with --help style parse exit
    CHECK(cli::run({"--help"}) == 0);
}

TEST_CASE("deviation outputs are byte-identical across worker counts") {
    fs::path dir = fresh_dir("repro");
    fs::path cfg = dir / "dev.cfg";
    spit(cfg, "model.m = 2\nmodel.star = 2:1\nprobe.n = 8\nprobe.j = 2\n"
              "mc.count = 12288\nmc.seed = 11\n");
    fs::path o1 = dir / "w1", o4 = dir / "w4";
    CHECK(cli::run({"deviation", "--config", cfg.string(), "--out", o1.string(),
                    "--workers", "1"}) == 0);
    CHECK(cli::run({"deviation", "--config", cfg.string(), "--out", o4.string(),
                    "--workers", "4"}) == 0);
    CHECK(slurp(o1 / "summary.json") == slurp(o4 / "summary.json"));
    CHECK(slurp(o1 / "deviation.csv") == slurp(o4 / "deviation.csv"));
    CHECK(manifest_without_clock(o1 / "manifest.json") ==
          manifest_without_clock(o4 / "manifest.json"));

    // --seed overrides the config and lands in the manifest
    fs::path o2 = dir / "seeded";
    CHECK(cli::run({"deviation", "--config", cfg.string(), "--out", o2.string(),
                    "--seed", "77"}) == 0);
    auto manifest = nlohmann::json::parse(slurp(o2 / "manifest.json"));
    CHECK(manifest["seed"].get<std::uint64_t>() == 77);
    CHECK(slurp(o2 / "summary.json") != slurp(o1 / "summary.json"));
}

TEST_CASE("coupling command emits one row per (p, n)") {
    fs::path dir = fresh_dir("coupling");
    fs::path cfg = dir / "c.cfg";
    spit(cfg, "model.m = 2\nmodel.star = 2:1\nrun.n_max = 15\ncoupling.p_list = 0.1, 0.19\n");
    CHECK(cli::run({"coupling", "--config", cfg.string(), "--out", (dir / "out").string()}) == 0);
    std::string csv = slurp(dir / "out" / "coupling.csv");
    CHECK(csv.rfind("p,n,lhs,rhs,margin\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 16);
    auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary["pass"].get<bool>());
    CHECK(summary["margins"].contains("0.1"));
    CHECK(summary["margins"].contains("0.19"));
}

TEST_CASE("exponent sweep runs on a short epsilon list") {
    fs::path dir = fresh_dir("sweep");
    fs::path cfg = dir / "s.cfg";
    spit(cfg, "model.m = 2\nmodel.star = 2:1\nrun.n_max = 300\nrun.tau = 0\n"
              "fit.epsilon_list = 0.1, 0.05\n");
    int rc = cli::run({"exponent-sweep", "--config", cfg.string(),
                       "--out", (dir / "out").string()});
    CHECK((rc == 0 || rc == 2));  // the two-point slope band is not asserted here
    std::string kcsv = slurp(dir / "out" / "kappa.csv");
    CHECK(kcsv.rfind("epsilon,kappa_hat,win_lo,win_hi,max_residual,status\n", 0) == 0);
    auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary["kappa_hat"].size() == 2);
    double k10 = summary["kappa_hat"]["0.1"].get<double>();
    double k05 = summary["kappa_hat"]["0.05"].get<double>();
    CHECK(k05 < k10);  // kappa shrinks toward the critical point
    CHECK(summary["margins"]["monotone"].get<bool>());
    CHECK(fs::exists(dir / "out" / "trace_eps_0.1.csv"));
    CHECK(fs::exists(dir / "out" / "trace_eps_0.05.csv"));
}
