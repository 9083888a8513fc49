#pragma once
// Command-line front end: config parsing, the six commands, CSV/JSON output.
// Exit codes: 0 all checks passed, 2 a numerical assertion failed, 3 bad
// configuration, 4 resource budget exceeded.

#include "drlab/pmf.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace drlab::cli {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct Config {
    // model
    int m = 2;
    std::vector<std::pair<int, double>> star = {{2, 1.0}};
    std::optional<double> p;
    std::optional<double> epsilon;

    // run
    int n_max = 200;
    double tau = 1e-16;
    std::size_t support_cap = std::size_t(1) << 22;

    // mc
    std::uint64_t count = 100000;
    std::uint64_t seed = 1;
    int workers = 1;
    std::uint64_t node_budget = std::uint64_t(1) << 26;

    // fit (exponent sweep)
    std::vector<double> epsilon_list;
    double slope_lo = 0.35, slope_hi = 0.70;

    // probe (deviation)
    int probe_n = 16, probe_j = 4;

    // coupling
    std::vector<double> coupling_p = {0.10, 0.15, 0.19};

    // critical command windows
    int slope_win_lo = 200, slope_win_hi = 1000;
    int product_win_lo = 200, product_win_hi = 2000;

    // output
    std::string out_dir = "out";

    ModelSpec resolve_model() const;       // needs exactly one of p/epsilon
    ModelSpec resolve_critical() const;    // p = p_c
    TruncationPolicy policy() const;
};

Config parse_config_text(const std::string& text);  // throws ConfigError
Config parse_config_file(const std::string& path);

// shortest round-trip decimal form (std::to_chars)
std::string format_double(double v);

// full CLI entry point; argv-style args without the program name.
// Never throws: errors map onto the exit codes above.
int run(const std::vector<std::string>& args);

extern const char* const kVersion;

}  // namespace drlab::cli
