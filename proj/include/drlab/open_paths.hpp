#pragma once
// Open-path counting on the recursive trees: the exact transform recursion
// for E[theta^{N_n}; Y_n = y], the subcritical/critical survival coupling,
// and Monte Carlo tree samplers with scheduling-independent reduction.

#include "drlab/pmf.hpp"
#include "drlab/rng.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace drlab {

// ---------- exact transform ----------

// a_n(y) = E[theta^{N_n}; Y_n = y] on the critical line, advanced jointly
// with the companion law q_n of Y_n.  Invariants: 0 <= a <= companion
// entrywise, sum a <= 1, and a == companion when theta == 1.
struct OpenPathTransform {
    double theta = 1.0;
    std::vector<double> a;  // true units (no binary scaling)
    IntPmf companion;
    int n = 0;
    ModelSpec spec;
    TruncationPolicy policy;
    double tail_defect = 0.0;  // a-mass dropped past the companion support
};

OpenPathTransform transform_init(const ModelSpec& critical_spec, double theta,
                                 const TruncationPolicy& policy);
void transform_step(OpenPathTransform& t);
void transform_validate(const OpenPathTransform& t);  // throws std::logic_error

double transform_survival_part(const OpenPathTransform& t);  // sum_{y>=1} a(y)
// P(N_n >= 1) read off the theta = 0 transform as 1 - a(0)
double transform_open_prob(const OpenPathTransform& t);

// ---------- coupling ----------

struct CouplingRow {
    int n;
    double lhs;  // P(X_n >= 1) at p
    double rhs;  // (p/p_c)^{m^n} P(Y_n >= 1) at p_c
    double margin;
};
struct CouplingReport {
    std::vector<CouplingRow> rows;
    double min_margin;
    int argmin;
    bool pass;            // min_margin >= -1e-12 (roundoff + defect allowance)
    double defect_final;  // larger of the two chains' final defects
};
CouplingReport coupling_check(const ModelSpec& spec, int n_max, const TruncationPolicy& policy);

// ---------- tree samplers ----------

struct TreeSample {
    long long y;       // root value Y_n
    long long n_open;  // open-path count N_n
};
// simulates one depth-n tree with i.i.d. leaves (1-p) delta_0 + p star;
// throws BudgetError once m^n exceeds node_budget
TreeSample sample_yn_pair(const ModelSpec& spec, int n, SplitMix64& g,
                          std::uint64_t node_budget);

struct CoupledSample {
    long long x;       // subcritical root, leaves thinned with keep prob p/p_c
    long long y;       // critical root on the same tree
    long long n_open;  // open-path count of the critical tree
};
CoupledSample sample_coupled(const ModelSpec& spec, int n, SplitMix64& g,
                             std::uint64_t node_budget);

// deterministic evaluation of (Y, N) from explicit leaf values via the
// bottom-up recursion N(u) = 1{sum_c Y(c) >= 1} sum_c N(c), N(leaf) = 1
std::pair<long long, long long> evaluate_tree(int n, int m,
                                              const std::vector<long long>& leaves);
// independent count straight from the definition: a leaf-to-root path is open
// when every prefix sum of leaf value plus sibling contributions stays ahead
// of the clip; capped at m^n <= 729
long long enumerate_definitional(int n, int m, const std::vector<long long>& leaves);

// ---------- Monte Carlo ----------

struct McEstimate {
    double mean;
    double std_error;
    std::uint64_t count;
    std::uint64_t seed;
};

// Evaluates `statistic` on per-sample streams (seed, i), i < count, reduced
// in fixed blocks of 4096 combined in index order: the result is
// bit-identical for any worker count.  The statistic must be pure.
McEstimate mc_estimate(const std::function<double(SplitMix64&)>& statistic,
                       std::uint64_t count, std::uint64_t seed, int workers);

struct DeviationReport {
    int n, j;
    std::uint64_t count, seed;
    double estimate;     // P(Y_n >= ceil(n/j), 1 <= N_n <= j n)
    double std_error;
    double h_n_m;        // exact H_n(m) from the pmf iteration
    double base;         // m^{-n/j} H_n(m)
    double ceiling;      // base * (1 + 4 relative std error)
    bool within;
    double p_y_ge_thr;   // P(Y_n >= ceil(n/j)) estimate
    double p_y_ge_1;     // P(Y_n >= 1) estimate
    double conditional;  // P(N <= j n | Y >= ceil(n/j)), reported, not asserted
    double defect;       // defect of the exact pmf behind h_n_m
};
DeviationReport deviation_probe(const ModelSpec& critical_spec, int n, int j,
                                std::uint64_t count, std::uint64_t seed, int workers,
                                std::uint64_t node_budget, const TruncationPolicy& policy);

}  // namespace drlab
