#include "drlab/cli.hpp"
#include "drlab/analytics.hpp"
#include "drlab/open_paths.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

namespace drlab::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kResidualGate = 1e-9;   // scaled delta-recursion residual
constexpr double kCritSlopeLo = -2.6;    // decay-exponent band on the critical line
constexpr double kCritSlopeHi = -1.5;

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + p.string());
    f << content;
    f.flush();
    if (!f.good()) throw std::runtime_error("write failed: " + p.string());
}

void write_json(const fs::path& p, const json& j) {
    write_file(p, j.dump(2) + "\n");
}

std::string trace_csv(const IterationTrace& t) {
    std::string s = "n,mean,survival,h_m,h1_m,delta,defect\n";
    for (const auto& r : t.records) {
        s += std::to_string(r.n);
        s += ',';
        s += format_double(r.mean);
        s += ',';
        s += format_double(r.survival);
        s += ',';
        s += format_double(r.h_m);
        s += ',';
        s += format_double(r.h1_m);
        s += ',';
        s += format_double(r.delta);
        s += ',';
        s += format_double(r.defect);
        s += '\n';
    }
    return s;
}

json fit_json(const FitResult& f) {
    json j;
    j["intercept"] = f.intercept;
    j["kind"] = f.kind;
    j["max_residual"] = f.max_residual;
    j["slope"] = f.slope;
    j["window"] = json::array({f.win_lo, f.win_hi});
    return j;
}

// echo of everything that shapes results; scheduling knobs (workers) and the
// output location are deliberately left out so reruns compare byte-identical
json config_echo(const Config& c) {
    json j;
    j["model.m"] = c.m;
    json star = json::array();
    for (const auto& [v, q] : c.star) star.push_back(json::array({v, q}));
    j["model.star"] = star;
    if (c.p) j["model.p"] = *c.p;
    if (c.epsilon) j["model.epsilon"] = *c.epsilon;
    j["run.n_max"] = c.n_max;
    j["run.tau"] = c.tau;
    j["run.support_cap"] = c.support_cap;
    j["mc.count"] = c.count;
    j["mc.seed"] = c.seed;
    j["mc.node_budget"] = c.node_budget;
    j["fit.epsilon_list"] = c.epsilon_list;
    j["fit.slope_band"] = json::array({c.slope_lo, c.slope_hi});
    j["probe.n"] = c.probe_n;
    j["probe.j"] = c.probe_j;
    j["coupling.p_list"] = c.coupling_p;
    j["critical.slope_window"] = json::array({c.slope_win_lo, c.slope_win_hi});
    j["critical.product_window"] = json::array({c.product_win_lo, c.product_win_hi});
    return j;
}

struct CmdCtx {
    std::string command;
    fs::path dir;
    const Config* cfg;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    void write_manifest(double p_c, const json& epsilon, const json& defect,
                        const std::vector<FitResult>& fits) const {
        json m;
        m["code_version"] = kVersion;
        m["command"] = command;
        m["config"] = config_echo(*cfg);
        m["defect"] = defect;
        m["epsilon"] = epsilon;
        json fj = json::array();
        for (const auto& f : fits) fj.push_back(fit_json(f));
        m["fits"] = fj;
        m["p_c"] = p_c;
        m["seed"] = cfg->seed;
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        m["wall_clock_seconds"] = secs;
        write_json(dir / "manifest.json", m);
    }
};

// ---------- commands ----------

int cmd_pc(const Config& cfg, CmdCtx& ctx) {
    double pc = critical_p(StarLaw{cfg.star}, cfg.m);
    json summary;
    summary["p_c"] = pc;
    if (cfg.p) summary["epsilon"] = pc - *cfg.p;
    summary["pass"] = true;
    write_json(ctx.dir / "summary.json", summary);
    ctx.write_manifest(pc, cfg.p ? json(pc - *cfg.p) : json(), json(), {});
    std::cout << "p_c = " << format_double(pc) << "\n";
    return 0;
}

int cmd_iterate(const Config& cfg, CmdCtx& ctx) {
    ModelSpec spec = cfg.resolve_model();
    IterationTrace trace = iterate_trace(spec, cfg.n_max, cfg.policy());
    write_file(ctx.dir / "trace.csv", trace_csv(trace));

    ResidualReport rr = delta_recursion_residual(trace);
    double scaled = 0.0;
    for (std::size_t i = 0; i < rr.residuals.size(); ++i) {
        double den = std::max(1.0, std::abs(trace.records[i + 1].delta));
        scaled = std::max(scaled, rr.residuals[i] / den);
    }
    bool pass = scaled <= kResidualGate;

    json margins;
    margins["delta_residual_max"] = rr.max_residual;
    margins["delta_residual_scaled"] = scaled;
    margins["defect_final"] = trace.records.back().defect;
    std::vector<FitResult> fits;
    if (spec.epsilon > 0.0) {
        ProductBoundReport pb = product_bound_check(trace);
        margins["product_max"] = pb.max_product;
        margins["product_bound"] = pb.bound;
        pass = pass && pb.pass;
    }

    json summary;
    summary["p_c"] = spec.p_c;
    summary["epsilon"] = spec.epsilon;
    summary["margins"] = margins;
    summary["pass"] = pass;
    write_json(ctx.dir / "summary.json", summary);
    ctx.write_manifest(spec.p_c, spec.epsilon,
                       json{{"final", trace.records.back().defect},
                            {"max", trace.records.back().defect}},
                       fits);
    std::cout << "iterate: " << cfg.n_max << " generations at p = " << format_double(spec.p)
              << ", scaled delta residual " << format_double(scaled)
              << (pass ? " [ok]" : " [FAIL]") << "\n";
    return pass ? 0 : 2;
}

int cmd_exponent_sweep(const Config& cfg, CmdCtx& ctx) {
    if (cfg.epsilon_list.empty())
        throw ConfigError("exponent-sweep: needs fit.epsilon_list");
    std::vector<double> eps_sorted = cfg.epsilon_list;
    std::sort(eps_sorted.begin(), eps_sorted.end());
    for (double e : eps_sorted)
        if (!(e > 0.0)) throw ConfigError("exponent-sweep: epsilons must be > 0");

    std::string kcsv = "epsilon,kappa_hat,win_lo,win_hi,max_residual,status\n";
    std::vector<double> xs, ys;
    std::vector<FitResult> fits;
    json khat, kwin;
    double defect_max = 0.0;
    for (double eps : eps_sorted) {
        ModelSpec spec = ModelSpec::from_epsilon(cfg.m, StarLaw{cfg.star}, eps);
        IterationTrace trace = iterate_trace(spec, cfg.n_max, cfg.policy(), 1e-260);
        defect_max = std::max(defect_max, trace.records.back().defect);
        write_file(ctx.dir / ("trace_eps_" + format_double(eps) + ".csv"), trace_csv(trace));
        kcsv += format_double(eps);
        kcsv += ',';
        try {
            auto [lo, hi] = default_kappa_window(trace);
            FitResult fit = kappa_fit(trace, lo, hi);
            xs.push_back(eps);
            ys.push_back(fit.slope);
            fits.push_back(fit);
            khat[format_double(eps)] = fit.slope;
            kwin[format_double(eps)] = json::array({lo, hi});
            kcsv += format_double(fit.slope);
            kcsv += ',';
            kcsv += std::to_string(lo);
            kcsv += ',';
            kcsv += std::to_string(hi);
            kcsv += ',';
            kcsv += format_double(fit.max_residual);
            kcsv += ",ok\n";
        } catch (const BudgetError& e) {
            // per-epsilon exhaustion is reported and the sweep continues
            kcsv += ",,,,";
            kcsv += e.what();
            kcsv += '\n';
        }
    }
    write_file(ctx.dir / "kappa.csv", kcsv);
    if (xs.size() < 2)
        throw ConfigError("exponent-sweep: need >= 2 usable kappa points for the slope");

    bool monotone = true;
    for (std::size_t i = 0; i + 1 < ys.size(); ++i)
        if (!(ys[i] < ys[i + 1])) monotone = false;
    FitResult slope = loglog_slope(xs, ys);
    fits.push_back(slope);
    bool in_band = slope.slope >= cfg.slope_lo && slope.slope <= cfg.slope_hi;
    bool pass = monotone && in_band;

    double pc = critical_p(StarLaw{cfg.star}, cfg.m);
    json summary;
    summary["p_c"] = pc;
    summary["kappa_hat"] = khat;
    summary["slope"] = slope.slope;
    summary["window"] = kwin;
    summary["margins"] = json{{"monotone", monotone},
                              {"slope_band", json::array({cfg.slope_lo, cfg.slope_hi})}};
    summary["pass"] = pass;
    write_json(ctx.dir / "summary.json", summary);
    ctx.write_manifest(pc, json(), json{{"max", defect_max}}, fits);
    std::cout << "exponent-sweep: slope " << format_double(slope.slope) << " over "
              << xs.size() << " epsilons" << (pass ? " [ok]" : " [FAIL]") << "\n";
    return pass ? 0 : 2;
}

int cmd_critical(const Config& cfg, CmdCtx& ctx) {
    if (cfg.slope_win_lo < 1 || cfg.slope_win_hi <= cfg.slope_win_lo)
        throw ConfigError("critical: bad critical.slope_window");
    if (cfg.n_max < cfg.product_win_lo || cfg.n_max < cfg.slope_win_hi)
        throw ConfigError("critical: run.n_max must reach the configured windows");

    ModelSpec spec = cfg.resolve_critical();
    TruncationPolicy pol = cfg.policy();
    IterationTrace trace = iterate_trace(spec, cfg.n_max, pol);
    write_file(ctx.dir / "trace.csv", trace_csv(trace));

    // open-path survival from the theta = 0 transform
    OpenPathTransform tr = transform_init(spec, 0.0, pol);
    std::vector<double> open_prob(std::size_t(cfg.slope_win_hi) + 1);
    open_prob[0] = transform_open_prob(tr);
    std::string ocsv = "n,p_open\n0," + format_double(open_prob[0]) + "\n";
    for (int n = 1; n <= cfg.slope_win_hi; ++n) {
        transform_step(tr);
        open_prob[std::size_t(n)] = transform_open_prob(tr);
        ocsv += std::to_string(n);
        ocsv += ',';
        ocsv += format_double(open_prob[std::size_t(n)]);
        ocsv += '\n';
    }
    write_file(ctx.dir / "open_paths.csv", ocsv);

    std::vector<double> ns, mean_v, surv_v, open_v;
    for (int n = cfg.slope_win_lo; n <= cfg.slope_win_hi; ++n) {
        ns.push_back(double(n));
        mean_v.push_back(trace.records[std::size_t(n)].mean);
        surv_v.push_back(trace.records[std::size_t(n)].survival);
        open_v.push_back(open_prob[std::size_t(n)]);
    }
    FitResult f_mean = loglog_slope(ns, mean_v);
    FitResult f_surv = loglog_slope(ns, surv_v);
    FitResult f_open = loglog_slope(ns, open_v);
    ProductBoundReport pb =
        product_bound_check(trace, cfg.product_win_lo, std::min(cfg.product_win_hi, cfg.n_max));

    auto in_band = [](double s) { return s >= kCritSlopeLo && s <= kCritSlopeHi; };
    bool pass = in_band(f_mean.slope) && in_band(f_surv.slope) && in_band(f_open.slope) && pb.pass;

    json summary;
    summary["p_c"] = spec.p_c;
    summary["epsilon"] = 0.0;
    summary["slope"] = json{{"mean", f_mean.slope},
                            {"survival", f_surv.slope},
                            {"open_paths", f_open.slope}};
    summary["window"] = json::array({cfg.slope_win_lo, cfg.slope_win_hi});
    summary["margins"] = json{{"product_spread", pb.spread},
                              {"product_ratio_min", pb.ratio_min},
                              {"product_ratio_max", pb.ratio_max},
                              {"slope_band", json::array({kCritSlopeLo, kCritSlopeHi})}};
    summary["pass"] = pass;
    write_json(ctx.dir / "summary.json", summary);
    ctx.write_manifest(spec.p_c, 0.0,
                       json{{"final", trace.records.back().defect},
                            {"max", trace.records.back().defect}},
                       {f_mean, f_surv, f_open});
    std::cout << "critical: slopes mean " << format_double(f_mean.slope) << ", survival "
              << format_double(f_surv.slope) << ", open-paths " << format_double(f_open.slope)
              << ", product spread " << format_double(pb.spread)
              << (pass ? " [ok]" : " [FAIL]") << "\n";
    return pass ? 0 : 2;
}

int cmd_coupling(const Config& cfg, CmdCtx& ctx) {
    if (cfg.coupling_p.empty()) throw ConfigError("coupling: needs coupling.p_list");
    std::string csv = "p,n,lhs,rhs,margin\n";
    json margins;
    bool pass = true;
    double defect_max = 0.0;
    double pc = critical_p(StarLaw{cfg.star}, cfg.m);
    for (double q : cfg.coupling_p) {
        ModelSpec spec = ModelSpec::from_p(cfg.m, StarLaw{cfg.star}, q);
        CouplingReport rep = coupling_check(spec, cfg.n_max, cfg.policy());
        for (const auto& row : rep.rows) {
            csv += format_double(q);
            csv += ',';
            csv += std::to_string(row.n);
            csv += ',';
            csv += format_double(row.lhs);
            csv += ',';
            csv += format_double(row.rhs);
            csv += ',';
            csv += format_double(row.margin);
            csv += '\n';
        }
        margins[format_double(q)] = rep.min_margin;
        pass = pass && rep.pass;
        defect_max = std::max(defect_max, rep.defect_final);
    }
    write_file(ctx.dir / "coupling.csv", csv);
    json summary;
    summary["p_c"] = pc;
    summary["margins"] = margins;
    summary["pass"] = pass;
    write_json(ctx.dir / "summary.json", summary);
    ctx.write_manifest(pc, json(), json{{"max", defect_max}}, {});
    std::cout << "coupling: " << cfg.coupling_p.size() << " values of p, n <= " << cfg.n_max
              << (pass ? " [ok]" : " [FAIL]") << "\n";
    return pass ? 0 : 2;
}

int cmd_deviation(const Config& cfg, CmdCtx& ctx) {
    ModelSpec spec = cfg.resolve_critical();
    DeviationReport rep = deviation_probe(spec, cfg.probe_n, cfg.probe_j, cfg.count, cfg.seed,
                                          cfg.workers, cfg.node_budget, cfg.policy());
    std::string csv =
        "n,j,count,estimate,std_error,h_n_m,base,ceiling,p_y_ge_thr,p_y_ge_1,conditional\n";
    csv += std::to_string(rep.n);
    csv += ',';
    csv += std::to_string(rep.j);
    csv += ',';
    csv += std::to_string(rep.count);
    csv += ',';
    csv += format_double(rep.estimate);
    csv += ',';
    csv += format_double(rep.std_error);
    csv += ',';
    csv += format_double(rep.h_n_m);
    csv += ',';
    csv += format_double(rep.base);
    csv += ',';
    csv += format_double(rep.ceiling);
    csv += ',';
    csv += format_double(rep.p_y_ge_thr);
    csv += ',';
    csv += format_double(rep.p_y_ge_1);
    csv += ',';
    csv += format_double(rep.conditional);
    csv += '\n';
    write_file(ctx.dir / "deviation.csv", csv);

    json summary;
    summary["p_c"] = spec.p_c;
    summary["epsilon"] = 0.0;
    summary["margins"] = json{{"estimate", rep.estimate},
                              {"std_error", rep.std_error},
                              {"base", rep.base},
                              {"ceiling", rep.ceiling},
                              {"h_n_m", rep.h_n_m},
                              {"p_y_ge_thr", rep.p_y_ge_thr},
                              {"p_y_ge_1", rep.p_y_ge_1},
                              {"conditional", rep.conditional}};
    summary["pass"] = rep.within;
    write_json(ctx.dir / "summary.json", summary);
    ctx.write_manifest(spec.p_c, 0.0, json{{"final", rep.defect}, {"max", rep.defect}}, {});
    std::cout << "deviation: estimate " << format_double(rep.estimate) << " vs ceiling "
              << format_double(rep.ceiling) << (rep.within ? " [ok]" : " [FAIL]") << "\n";
    return rep.within ? 0 : 2;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"numerical laboratory for a max-type recursive distributional system"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::uint64_t seed_override = 0;
    int workers_override = 0;
    bool has_seed = false;

    const std::vector<std::pair<std::string, std::string>> cmds = {
        {"pc", "print the critical initial mass p_c for the configured star law"},
        {"iterate", "run the pmf iteration and check the delta recursion"},
        {"exponent-sweep", "fit the decay exponent kappa across a list of epsilons"},
        {"critical", "decay slopes and product growth on the critical line"},
        {"coupling", "exact subcritical/critical survival coupling check"},
        {"deviation", "Monte Carlo deviation probe against the exact ceiling"}};
    for (const auto& [name, desc] : cmds) {
        CLI::App* sc = app.add_subcommand(name, desc);
        sc->add_option("--config", config_path, "experiment config file")->required();
        sc->add_option("--seed", seed_override, "override mc.seed")
            ->each([&](const std::string&) { has_seed = true; });
        sc->add_option("--workers", workers_override, "override mc.workers");
        sc->add_option("--out", out_override, "override output.dir");
    }

    std::vector<const char*> argv;
    argv.push_back("drlab");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 3;
    }

    try {
        Config cfg = parse_config_file(config_path);
        if (has_seed) cfg.seed = seed_override;
        if (workers_override > 0) cfg.workers = workers_override;
        if (!out_override.empty()) cfg.out_dir = out_override;

        CmdCtx ctx;
        ctx.command = app.get_subcommands().at(0)->get_name();
        ctx.dir = fs::path(cfg.out_dir);
        ctx.cfg = &cfg;
        fs::create_directories(ctx.dir);

        if (ctx.command == "pc") return cmd_pc(cfg, ctx);
        if (ctx.command == "iterate") return cmd_iterate(cfg, ctx);
        if (ctx.command == "exponent-sweep") return cmd_exponent_sweep(cfg, ctx);
        if (ctx.command == "critical") return cmd_critical(cfg, ctx);
        if (ctx.command == "coupling") return cmd_coupling(cfg, ctx);
        if (ctx.command == "deviation") return cmd_deviation(cfg, ctx);
        std::cerr << "error: unknown command\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const BudgetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace drlab::cli
