#include "drlab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace drlab::cli {

const char* const kVersion = "drlab 1.0.0";

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_num(const std::string& raw, const std::string& key) {
    std::string s = trim(raw);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("config: bad number for " + key + ": '" + s + "'");
    return v;
}

long long parse_int(const std::string& raw, const std::string& key) {
    std::string s = trim(raw);
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("config: bad integer for " + key + ": '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t nxt = s.find(sep, pos);
        if (nxt == std::string::npos) {
            out.push_back(trim(s.substr(pos)));
            break;
        }
        out.push_back(trim(s.substr(pos, nxt - pos)));
        pos = nxt + 1;
    }
    return out;
}

std::vector<double> parse_list(const std::string& raw, const std::string& key) {
    std::vector<double> out;
    for (const auto& tok : split(raw, ','))
        if (!tok.empty()) out.push_back(parse_num(tok, key));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

// "value:prob, value:prob, ..."
std::vector<std::pair<int, double>> parse_star(const std::string& raw) {
    std::vector<std::pair<int, double>> out;
    for (const auto& tok : split(raw, ',')) {
        if (tok.empty()) continue;
        std::size_t c = tok.find(':');
        if (c == std::string::npos)
            throw ConfigError("config: model.star atoms must look like 'value:prob', got '" + tok + "'");
        long long v = parse_int(tok.substr(0, c), "model.star");
        double q = parse_num(tok.substr(c + 1), "model.star");
        out.emplace_back(int(v), q);
    }
    if (out.empty()) throw ConfigError("config: model.star has no atoms");
    return out;
}

}  // namespace

Config parse_config_text(const std::string& text) {
    Config cfg;
    bool saw_p = false, saw_eps = false;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (val.empty())
            throw ConfigError("config: empty value for " + key);

        if (key == "model.m") cfg.m = int(parse_int(val, key));
        else if (key == "model.star") cfg.star = parse_star(val);
        else if (key == "model.p") { cfg.p = parse_num(val, key); saw_p = true; }
        else if (key == "model.epsilon") { cfg.epsilon = parse_num(val, key); saw_eps = true; }
        else if (key == "run.n_max") cfg.n_max = int(parse_int(val, key));
        else if (key == "run.tau") cfg.tau = parse_num(val, key);
        else if (key == "run.support_cap") cfg.support_cap = std::size_t(parse_int(val, key));
        else if (key == "mc.count") cfg.count = std::uint64_t(parse_int(val, key));
        else if (key == "mc.seed") cfg.seed = std::uint64_t(parse_int(val, key));
        else if (key == "mc.workers") cfg.workers = int(parse_int(val, key));
        else if (key == "mc.node_budget") cfg.node_budget = std::uint64_t(parse_int(val, key));
        else if (key == "fit.epsilon_list") cfg.epsilon_list = parse_list(val, key);
        else if (key == "fit.slope_band") {
            auto band = parse_list(val, key);
            if (band.size() != 2 || !(band[0] < band[1]))
                throw ConfigError("config: fit.slope_band needs 'lo, hi' with lo < hi");
            cfg.slope_lo = band[0];
            cfg.slope_hi = band[1];
        }
        else if (key == "probe.n") cfg.probe_n = int(parse_int(val, key));
        else if (key == "probe.j") cfg.probe_j = int(parse_int(val, key));
        else if (key == "coupling.p_list") cfg.coupling_p = parse_list(val, key);
        else if (key == "critical.slope_window") {
            auto w = parse_list(val, key);
            if (w.size() != 2) throw ConfigError("config: critical.slope_window needs 'lo, hi'");
            cfg.slope_win_lo = int(w[0]);
            cfg.slope_win_hi = int(w[1]);
        }
        else if (key == "critical.product_window") {
            auto w = parse_list(val, key);
            if (w.size() != 2) throw ConfigError("config: critical.product_window needs 'lo, hi'");
            cfg.product_win_lo = int(w[0]);
            cfg.product_win_hi = int(w[1]);
        }
        else if (key == "output.dir") cfg.out_dir = val;
        else throw ConfigError("config: unknown key '" + key + "'");
    }

    if (saw_p && saw_eps)
        throw ConfigError("config: set exactly one of model.p and model.epsilon, not both");
    if (cfg.m < 2) throw ConfigError("config: model.m must be >= 2");
    if (!(cfg.tau >= 0.0 && cfg.tau <= 1e-8))
        throw ConfigError("config: run.tau must lie in [0, 1e-8]");
    if (cfg.n_max < 0) throw ConfigError("config: run.n_max must be >= 0");
    if (cfg.count < 1) throw ConfigError("config: mc.count must be >= 1");
    if (cfg.workers < 1) throw ConfigError("config: mc.workers must be >= 1");
    if (cfg.probe_n < 1 || cfg.probe_j < 1)
        throw ConfigError("config: probe.n and probe.j must be >= 1");
    for (double q : cfg.coupling_p)
        if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("config: coupling.p_list entries must lie in [0,1]");
    try {
        StarLaw star{cfg.star};
        star.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

Config parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

ModelSpec Config::resolve_model() const {
    StarLaw star_law{star};
    if (p && epsilon)
        throw ConfigError("config: set exactly one of model.p and model.epsilon, not both");
    if (p) return ModelSpec::from_p(m, star_law, *p);
    if (epsilon) return ModelSpec::from_epsilon(m, star_law, *epsilon);
    throw ConfigError("config: this command needs model.p or model.epsilon");
}

ModelSpec Config::resolve_critical() const {
    return ModelSpec::at_critical(m, StarLaw{star});
}

TruncationPolicy Config::policy() const {
    TruncationPolicy pol;
    pol.tau = tau;
    pol.support_cap = support_cap;
    pol.weight_base = m;
    return pol;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace drlab::cli
