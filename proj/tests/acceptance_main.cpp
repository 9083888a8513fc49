// Acceptance suite: ten end-to-end criteria, each printed as one PASS/FAIL
// line with the measured quantities.  Failures do not stop the run; the
// process exits nonzero when any criterion fails.
#include "drlab/analytics.hpp"
#include "drlab/cli.hpp"
#include "drlab/open_paths.hpp"
#include "drlab/pmf.hpp"
#include "drlab/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace drlab;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void criterion(int id, const char* title, const std::function<bool(std::string&)>& body) {
    auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        ok = false;
        if (!detail.empty()) detail += "; ";
        detail += "exception: ";
        detail += e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %2d: %s (%.1fs) -- %s\n", ok ? "PASS" : "FAIL", id, title,
                secs, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.6g", v);
    return b;
}

StarLaw star_const2() { return StarLaw{{{2, 1.0}}}; }

TruncationPolicy pol_default() {
    TruncationPolicy p;
    p.weight_base = 2;
    return p;
}

TruncationPolicy pol_exact() {
    TruncationPolicy p;
    p.tau = 0.0;
    p.weight_base = 2;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
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
    j.erase("wall_clock_seconds");
    return j.dump(2);
}

// ---------- criteria ----------

bool c1_subcritical_recursion(std::string& detail) {
    auto spec = ModelSpec::from_p(2, star_const2(), 0.15);
    auto t = iterate_trace(spec, 200, pol_default());
    auto rr = delta_recursion_residual(t);
    auto pb = product_bound_check(t);
    bool res_ok = rr.max_residual <= 1e-9;
    bool prod_ok = pb.bound_holds && std::fabs(pb.bound - 4.0) <= 1e-9;
    detail = "delta recursion residual max " + fmt(rr.max_residual) + " (gate 1e-9), product max " +
             fmt(pb.max_product) + " vs bound " + fmt(pb.bound);
    return res_ok && prod_ok;
}

bool c2_critical_invariants(std::string& detail) {
    auto spec = ModelSpec::at_critical(2, star_const2());
    bool pc_ok = std::fabs(spec.p_c - 0.2) <= 1e-15;
    auto t = iterate_trace(spec, 100, pol_default());
    double max_abs_delta = 0.0, sup_h = 0.0;
    for (const auto& r : t.records) {
        max_abs_delta = std::max(max_abs_delta, std::fabs(r.delta));
        sup_h = std::max(sup_h, r.h_m);
    }
    bool delta_ok = max_abs_delta <= 1e-8;
    bool h_ok = sup_h <= 2.0 + 1e-9;  // m^{1/(m-1)} for m = 2
    detail = "p_c " + fmt(spec.p_c) + ", max |delta_n| " + fmt(max_abs_delta) +
             " (gate 1e-8), sup H_n(2) " + fmt(sup_h) + " (gate 2)";
    return pc_ok && delta_ok && h_ok;
}

bool c3_critical_decay(std::string& detail) {
    auto spec = ModelSpec::at_critical(2, star_const2());
    auto pol = pol_exact();
    auto t = iterate_trace(spec, 2000, pol);

    OpenPathTransform tr = transform_init(spec, 0.0, pol);
    std::vector<double> open_prob(1001);
    open_prob[0] = transform_open_prob(tr);
    for (int n = 1; n <= 1000; ++n) {
        transform_step(tr);
        open_prob[std::size_t(n)] = transform_open_prob(tr);
    }

    std::vector<double> ns, mean_v, surv_v, open_v;
    for (int n = 200; n <= 1000; ++n) {
        ns.push_back(double(n));
        mean_v.push_back(t.records[std::size_t(n)].mean);
        surv_v.push_back(t.records[std::size_t(n)].survival);
        open_v.push_back(open_prob[std::size_t(n)]);
    }
    double s_mean = loglog_slope(ns, mean_v).slope;
    double s_surv = loglog_slope(ns, surv_v).slope;
    double s_open = loglog_slope(ns, open_v).slope;
    auto pb = product_bound_check(t, 200, 2000);

    auto in_band = [](double s) { return s >= -2.6 && s <= -1.5; };
    bool ok = in_band(s_mean) && in_band(s_surv) && in_band(s_open) && pb.pass;
    detail = "slopes over [200,1000]: mean " + fmt(s_mean) + ", survival " + fmt(s_surv) +
             ", open paths " + fmt(s_open) + " (band [-2.6,-1.5]); product/n^2 spread " +
             fmt(pb.spread) + " over [200,2000] (gate 3)";
    return ok;
}

bool c4_exponent_sweep(std::string& detail) {
    const std::vector<double> eps = {0.005, 0.01, 0.02, 0.04};
    std::vector<double> kap;
    std::string wins;
    for (double e : eps) {
        auto spec = ModelSpec::from_epsilon(2, star_const2(), e);
        auto t = iterate_trace(spec, 2500, pol_exact(), 1e-260);
        auto [lo, hi] = default_kappa_window(t);
        auto fit = kappa_fit(t, lo, hi);
        kap.push_back(fit.slope);
        wins += " [" + std::to_string(lo) + "," + std::to_string(hi) + "]";
    }
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < kap.size(); ++i)
        if (!(kap[i] < kap[i + 1])) monotone = false;
    double slope = loglog_slope(eps, kap).slope;
    bool band = slope >= 0.35 && slope <= 0.70;

    detail = "kappa_hat";
    for (std::size_t i = 0; i < eps.size(); ++i)
        detail += " " + fmt(eps[i]) + ":" + fmt(kap[i]);
    detail += "; windows" + wins + "; log-log slope " + fmt(slope) + " (band [0.35,0.70])" +
              (monotone ? "" : "; NOT monotone");
    return monotone && band;
}

bool c5_coupling(std::string& detail) {
    auto pol = pol_default();
    bool all_pass = true;
    std::string margins;
    CouplingReport rep10;
    for (double p : {0.10, 0.15, 0.19}) {
        auto rep = coupling_check(ModelSpec::from_p(2, star_const2(), p), 200, pol);
        if (p == 0.10) rep10 = rep;
        all_pass = all_pass && rep.pass;
        margins += " p=" + fmt(p) + ":" + fmt(rep.min_margin);
    }
    bool root_eq = rep10.rows[0].margin == 0.0;
    bool anchor = std::fabs(rep10.rows[1].lhs - 0.19) <= 1e-12 &&
                  std::fabs(rep10.rows[1].rhs - 0.09) <= 1e-12 &&
                  rep10.rows[1].lhs >= rep10.rows[1].rhs;
    detail = "min margins over n<=200:" + margins + "; n=1 anchor lhs " + fmt(rep10.rows[1].lhs) +
             " >= rhs " + fmt(rep10.rows[1].rhs) + "; root equality margin " +
             fmt(rep10.rows[0].margin);
    return all_pass && root_eq && anchor;
}

bool c6_definitional_count(std::string& detail) {
    long long mismatches = 0, total = 0;
    for (int m : {2, 3}) {
        for (int n = 0; n <= 4; ++n) {
            long long leaves = 1;
            for (int i = 0; i < n; ++i) leaves *= m;
            std::vector<long long> vals(static_cast<std::size_t>(leaves));
            for (int trial = 0; trial < 1000; ++trial) {
                SplitMix64 g = stream_for(std::uint64_t(4200 + 10 * m + n), std::uint64_t(trial));
                for (auto& v : vals) v = static_cast<long long>(g.next() % 4);
                auto [y, count] = evaluate_tree(n, m, vals);
                (void)y;
                if (count != enumerate_definitional(n, m, vals)) ++mismatches;
                ++total;
            }
        }
    }
    detail = "recursive vs definitional open-path counts: " + std::to_string(total) +
             " random assignments over (n,m) in {0..4}x{2,3}, " + std::to_string(mismatches) +
             " mismatches";
    return mismatches == 0;
}

bool c7_transform_vs_mc(std::string& detail) {
    auto spec = ModelSpec::at_critical(2, star_const2());
    auto pol = pol_exact();
    const std::uint64_t count = 100000, seed = 20260814;
    const std::uint64_t budget = std::uint64_t(1) << 26;
    bool ok = true;
    detail = "n=10, 1e5 samples:";
    for (double theta : {0.0, 0.5, 1.0}) {
        OpenPathTransform tr = transform_init(spec, theta, pol);
        for (int n = 0; n < 10; ++n) transform_step(tr);
        double exact = transform_survival_part(tr);
        auto est = mc_estimate(
            [&](SplitMix64& g) {
                TreeSample s = sample_yn_pair(spec, 10, g, budget);
                return s.y >= 1 ? std::pow(theta, double(s.n_open)) : 0.0;
            },
            count, seed, 4);
        bool here;
        if (theta == 0.0)
            here = est.mean == 0.0 && exact == 0.0;
        else
            here = std::fabs(est.mean - exact) <= 4.0 * est.std_error;
        ok = ok && here;
        detail += " theta=" + fmt(theta) + " exact " + fmt(exact) + " mc " + fmt(est.mean) +
                  " (se " + fmt(est.std_error) + ")" + (here ? "" : " OUT OF BAND");
    }
    return ok;
}

bool c8_deviation_probe(std::string& detail) {
    auto spec = ModelSpec::at_critical(2, star_const2());
    auto pol = pol_default();
    auto rep = deviation_probe(spec, 16, 4, 100000, 20260814, 4, std::uint64_t(1) << 26, pol);
    bool head = std::fabs(rep.h_n_m - 1.131206909) <= 1e-6 &&
                std::fabs(rep.base - 7.070043e-2) <= 1e-6;
    auto deg = deviation_probe(spec, 1, 1, 4096, 7, 1, std::uint64_t(1) << 26, pol);
    bool deg_ok = deg.estimate == 0.0 && deg.within;
    detail = "P(Y_16 >= 4, 1 <= N <= 64) estimate " + fmt(rep.estimate) + " (se " +
             fmt(rep.std_error) + ") vs ceiling " + fmt(rep.ceiling) + " from base 2^-4 H_16(2) = " +
             fmt(rep.base) + "; degenerate n=j=1 estimate " + fmt(deg.estimate);
    return rep.within && head && deg_ok;
}

bool c9_lower_bound(std::string& detail) {
    StarLaw u5{{{1, 0.2}, {2, 0.2}, {3, 0.2}, {4, 0.2}, {5, 0.2}}};
    auto spec = ModelSpec::from_p(2, u5, 0.1);
    auto t = iterate_trace(spec, 6, pol_exact());
    auto rep = initial_condition_lower_bound(t);
    bool mean_ok = std::fabs(t.records[3].mean - 0.6756347521) <= 1e-9;
    detail = "uniform{1..5} star, p=0.1: margins";
    for (std::size_t i = 0; i < rep.margins.size(); ++i)
        detail += " n=" + std::to_string(i) + ":" + fmt(rep.margins[i]);
    detail += "; E(X_3) " + fmt(t.records[3].mean);
    return rep.pass && rep.min_margin >= 0.0 && mean_ok;
}

bool c10_cli_reproducibility(std::string& detail) {
    fs::path base = fs::temp_directory_path() / "drlab_acceptance";
    fs::remove_all(base);
    fs::create_directories(base);

    fs::path dev_cfg = base / "deviation.cfg";
    spit(dev_cfg,
         "model.m = 2\nmodel.star = 2:1\nprobe.n = 10\nprobe.j = 2\n"
         "mc.count = 12289\nmc.seed = 99\n");
    int rc = 0;
    for (const char* w : {"1", "4", "16"}) {
        rc |= cli::run({"deviation", "--config", dev_cfg.string(),
                        "--out", (base / (std::string("w") + w)).string(), "--workers", w});
    }
    bool dev_codes = rc == 0;
    bool dev_bytes = slurp(base / "w1" / "summary.json") == slurp(base / "w4" / "summary.json") &&
                     slurp(base / "w1" / "summary.json") == slurp(base / "w16" / "summary.json") &&
                     slurp(base / "w1" / "deviation.csv") == slurp(base / "w4" / "deviation.csv") &&
                     slurp(base / "w1" / "deviation.csv") == slurp(base / "w16" / "deviation.csv");
    bool dev_manifest =
        manifest_without_clock(base / "w1" / "manifest.json") ==
            manifest_without_clock(base / "w4" / "manifest.json") &&
        manifest_without_clock(base / "w1" / "manifest.json") ==
            manifest_without_clock(base / "w16" / "manifest.json");

    fs::path it_cfg = base / "iterate.cfg";
    spit(it_cfg, "model.m = 2\nmodel.star = 2:1\nmodel.p = 0.15\nrun.n_max = 60\n");
    int rc_it = cli::run({"iterate", "--config", it_cfg.string(), "--out", (base / "it1").string()});
    rc_it |= cli::run({"iterate", "--config", it_cfg.string(), "--out", (base / "it2").string()});
    bool it_bytes = rc_it == 0 &&
                    slurp(base / "it1" / "trace.csv") == slurp(base / "it2" / "trace.csv") &&
                    slurp(base / "it1" / "summary.json") == slurp(base / "it2" / "summary.json") &&
                    manifest_without_clock(base / "it1" / "manifest.json") ==
                        manifest_without_clock(base / "it2" / "manifest.json");

    detail = std::string("deviation workers {1,4,16}: exit codes ") +
             (dev_codes ? "0" : "nonzero") + ", summary/csv bytes " +
             (dev_bytes ? "identical" : "DIFFER") + ", manifests minus wall clock " +
             (dev_manifest ? "identical" : "DIFFER") + "; iterate rerun bytes " +
             (it_bytes ? "identical" : "DIFFER");
    return dev_codes && dev_bytes && dev_manifest && it_bytes;
}

}  // namespace

int main() {
    std::printf("acceptance suite: exact pmf iteration, diagnostics, open paths, cli\n");
    criterion(1, "subcritical delta recursion and product bound (p=0.15, 200 generations)",
              c1_subcritical_recursion);
    criterion(2, "critical-point invariants (delta pinned at 0, H bounded, n <= 100)",
              c2_critical_invariants);
    criterion(3, "critical decay exponents and quadratic product growth (tau=0, n <= 2000)",
              c3_critical_decay);
    criterion(4, "decay-exponent sweep: kappa(epsilon) monotone with square-root-like slope",
              c4_exponent_sweep);
    criterion(5, "subcritical/critical survival coupling (p in {0.10, 0.15, 0.19}, n <= 200)",
              c5_coupling);
    criterion(6, "open-path count: recursion vs definitional enumeration (10,000 trees)",
              c6_definitional_count);
    criterion(7, "open-path transform vs Monte Carlo at n = 10 (theta in {0, 0.5, 1})",
              c7_transform_vs_mc);
    criterion(8, "upper-deviation probe: MC estimate under the exact ceiling (n=16, j=4)",
              c8_deviation_probe);
    criterion(9, "initial-condition lower bound on the mean (uniform{1..5} star)",
              c9_lower_bound);
    criterion(10, "CLI outputs byte-identical across worker counts and reruns",
              c10_cli_reproducibility);

    std::printf("acceptance: %d/10 criteria passed\n", 10 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
