#pragma once
// Diagnostics over iterated pmfs: per-generation scalar traces, the delta
// recursion and its product form, decay-exponent fits, free energy, and the
// moment-contraction certificate.

#include "drlab/pmf.hpp"

#include <string>
#include <utility>
#include <vector>

namespace drlab {

struct TraceRecord {
    int n;
    double mean;      // E(X_n), lower bound when defect > 0
    double survival;  // P(X_n >= 1)
    double h_m;       // H_n(m)  = E(m^{X_n})
    double h1_m;      // H_n'(m) = E(X_n m^{X_n - 1})
    double delta;     // h_m - m (m-1) h1_m
    double defect;    // cumulative truncated mass up to generation n
};

struct IterationTrace {
    ModelSpec spec;
    TruncationPolicy policy;
    std::vector<TraceRecord> records;  // generations 0..n_max in order
};

// same arithmetic, in the same order, as the traced delta column
double delta_scalar(const IntPmf& a, int m);
TraceRecord scalars_at(const IntPmf& a, int n, int m);

// Runs make_initial_law + dr_step, recording scalars per generation.
// stop_mean_below > 0 ends the run early once the mean falls under it.
IterationTrace iterate_trace(const ModelSpec& spec, int n_max, const TruncationPolicy& policy,
                             double stop_mean_below = 0.0);
IntPmf iterate_to(const ModelSpec& spec, int n, const TruncationPolicy& policy);

struct ResidualReport {
    std::vector<double> residuals;  // |delta_{n+1} - delta_n h_m(n)^{m-1}|
    double max_residual;
    int argmax;
};
ResidualReport delta_recursion_residual(const IterationTrace& t);

struct ProductBoundReport {
    // products P_n = prod_{i<n} h_m(i)^{m-1}, n = 0..N
    double max_product;
    bool subcritical;    // epsilon > 0: compare against 1/delta_0
    double bound;        // 1/delta_0 (subcritical branch)
    bool bound_holds;    // max_product <= bound * (1 + 1e-8)
    int win_lo, win_hi;  // critical branch: window for P_n / n^2
    double ratio_min, ratio_max, spread;
    bool pass;
};
ProductBoundReport product_bound_check(const IterationTrace& t, int win_lo = 200,
                                       int win_hi = 2000);

struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    int win_lo = 0, win_hi = 0;
    double max_residual = 0.0;
    std::string kind;  // "kappa" | "loglog_slope" | "free_energy"
};

// least squares of -log mean_n against n over generations [win_lo, win_hi];
// throws BudgetError("trace exhausted ...") if the window hits a dead mean
FitResult kappa_fit(const IterationTrace& t, int win_lo, int win_hi);
// [max(50, ceil(5 epsilon^-1/2)), last n with mean >= 1e-250]
std::pair<int, int> default_kappa_window(const IterationTrace& t);

// least squares of log y against log x over all given points
FitResult loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys);

// slope = final mean_n / m^n; max_residual = worst relative one-step increase
// (the sequence must be non-increasing up to 1e-12)
FitResult free_energy_estimate(const IterationTrace& t);

struct ContractionReport {
    int M;
    double t;
    double theta;        // (m/t) E(t^{X_M})^{m-1}
    bool hypothesis_met; // theta < 1
    bool bound_holds;    // E(t^{X_n}) <= 1 + (t - m) theta^{n-M} (1 + 1e-8), n in [M, n_max]
    double worst_ratio;  // max_n (E(t^{X_n}) - 1) / ((t - m) theta^{n-M})
    int checked_to;
};
ContractionReport contraction_monitor(const ModelSpec& spec, double t, int M, int n_max,
                                      const TruncationPolicy& policy);
// first M <= n_max with theta < 1, or -1
int first_contraction_index(const ModelSpec& spec, double t, int n_max,
                            const TruncationPolicy& policy);

struct LowerBoundReport {
    std::vector<double> margins;  // mean_n - p m^n P(star >= n+1) + tau m^n
    double min_margin;
    int argmin;
    bool pass;
};
// checks the mean against the bound carried by the initial condition, valid
// for n up to the largest star atom
LowerBoundReport initial_condition_lower_bound(const IterationTrace& t);

// E(X_n^2 s^X_n) / n at s = m + C/n, reported for n = 1..n_max (no assertion)
std::vector<double> moment_ratio_series(const ModelSpec& spec, double C, int n_max,
                                        const TruncationPolicy& policy);

}  // namespace drlab
