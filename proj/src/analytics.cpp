#include "drlab/analytics.hpp"
#include "drlab/sum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace drlab {

namespace {

// least squares of y against x; returns (slope, intercept, max |resid|)
struct LsqFit {
    double slope, intercept, max_residual;
};

LsqFit lsq(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    KahanSum sx, sy;
    for (std::size_t i = 0; i < n; ++i) {
        sx.add(xs[i]);
        sy.add(ys[i]);
    }
    const double mx = sx.value() / double(n);
    const double my = sy.value() / double(n);
    KahanSum sxx, sxy;
    for (std::size_t i = 0; i < n; ++i) {
        sxx.add((xs[i] - mx) * (xs[i] - mx));
        sxy.add((xs[i] - mx) * (ys[i] - my));
    }
    if (!(sxx.value() > 0.0)) throw std::invalid_argument("fit: degenerate abscissa");
    LsqFit f{};
    f.slope = sxy.value() / sxx.value();
    f.intercept = my - f.slope * mx;
    f.max_residual = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        f.max_residual = std::max(f.max_residual, std::abs(ys[i] - (f.intercept + f.slope * xs[i])));
    return f;
}

double ipow(double x, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= x;
    return r;
}

}  // namespace

double delta_scalar(const IntPmf& a, int m) {
    double h = weighted_moment(a, 0, double(m));
    double h1 = weighted_moment(a, 1, double(m)) / double(m);
    return h - double(m) * double(m - 1) * h1;
}

TraceRecord scalars_at(const IntPmf& a, int n, int m) {
    TraceRecord r{};
    r.n = n;
    r.mean = mean(a);
    r.survival = survival(a);
    r.h_m = weighted_moment(a, 0, double(m));
    r.h1_m = weighted_moment(a, 1, double(m)) / double(m);
    r.delta = r.h_m - double(m) * double(m - 1) * r.h1_m;
    r.defect = a.defect;
    return r;
}

IterationTrace iterate_trace(const ModelSpec& spec, int n_max, const TruncationPolicy& policy,
                             double stop_mean_below) {
    if (n_max < 0) throw std::invalid_argument("iterate_trace: n_max must be >= 0");
    IterationTrace t;
    t.spec = spec;
    t.policy = policy;
    t.records.reserve(std::size_t(n_max) + 1);
    IntPmf a = make_initial_law(spec);
    t.records.push_back(scalars_at(a, 0, spec.m));
    for (int n = 1; n <= n_max; ++n) {
        if (stop_mean_below > 0.0 && t.records.back().mean < stop_mean_below) break;
        a = dr_step(a, spec, policy);
        t.records.push_back(scalars_at(a, n, spec.m));
    }
    return t;
}

IntPmf iterate_to(const ModelSpec& spec, int n, const TruncationPolicy& policy) {
    IntPmf a = make_initial_law(spec);
    for (int i = 0; i < n; ++i) a = dr_step(a, spec, policy);
    return a;
}

ResidualReport delta_recursion_residual(const IterationTrace& t) {
    ResidualReport r{{}, 0.0, -1};
    const int m = t.spec.m;
    for (std::size_t i = 0; i + 1 < t.records.size(); ++i) {
        double pred = t.records[i].delta * ipow(t.records[i].h_m, m - 1);
        double res = std::abs(t.records[i + 1].delta - pred);
        r.residuals.push_back(res);
        if (res > r.max_residual) {
            r.max_residual = res;
            r.argmax = int(i);
        }
    }
    return r;
}

ProductBoundReport product_bound_check(const IterationTrace& t, int win_lo, int win_hi) {
    ProductBoundReport rep{};
    const int m = t.spec.m;
    const int N = int(t.records.size()) - 1;

    std::vector<double> prod(std::size_t(N) + 1);
    prod[0] = 1.0;
    for (int n = 1; n <= N; ++n) prod[std::size_t(n)] = prod[std::size_t(n) - 1] * ipow(t.records[std::size_t(n) - 1].h_m, m - 1);
    rep.max_product = *std::max_element(prod.begin(), prod.end());

    rep.subcritical = t.spec.epsilon > 0.0;
    if (rep.subcritical) {
        double d0 = t.records[0].delta;
        if (!(d0 > 0.0)) throw std::logic_error("product bound: delta_0 not positive on a subcritical run");
        rep.bound = 1.0 / d0;
        rep.bound_holds = rep.max_product <= rep.bound * (1.0 + 1e-8);
        rep.pass = rep.bound_holds;
        return rep;
    }
    if (t.spec.epsilon < 0.0) {  // supercritical: nothing to assert
        rep.pass = true;
        return rep;
    }
    // critical: P_n / n^2 must stay within a bounded spread over the window
    rep.win_lo = win_lo;
    rep.win_hi = std::min(win_hi, N);
    if (rep.win_hi < rep.win_lo)
        throw std::invalid_argument("product bound: trace shorter than the ratio window");
    rep.ratio_min = std::numeric_limits<double>::infinity();
    rep.ratio_max = 0.0;
    for (int n = rep.win_lo; n <= rep.win_hi; ++n) {
        double ratio = prod[std::size_t(n)] / (double(n) * double(n));
        rep.ratio_min = std::min(rep.ratio_min, ratio);
        rep.ratio_max = std::max(rep.ratio_max, ratio);
    }
    rep.spread = rep.ratio_max / rep.ratio_min;
    rep.pass = rep.spread <= 3.0;
    return rep;
}

FitResult kappa_fit(const IterationTrace& t, int win_lo, int win_hi) {
    const int N = int(t.records.size()) - 1;
    if (win_lo < 0 || win_hi > N || win_hi - win_lo + 1 < 10)
        throw std::invalid_argument("kappa fit: window must hold at least 10 generations inside the trace");
    std::vector<double> xs, ys;
    xs.reserve(std::size_t(win_hi - win_lo) + 1);
    ys.reserve(xs.capacity());
    for (int n = win_lo; n <= win_hi; ++n) {
        double mu = t.records[std::size_t(n)].mean;
        if (!(mu > 0.0) || !std::isfinite(mu)) {
            std::ostringstream os;
            os << "trace exhausted at generation " << n << ": mean is " << mu;
            throw BudgetError(os.str());
        }
        xs.push_back(double(n));
        ys.push_back(-std::log(mu));
    }
    LsqFit f = lsq(xs, ys);
    FitResult r;
    r.slope = f.slope;
    r.intercept = f.intercept;
    r.win_lo = win_lo;
    r.win_hi = win_hi;
    r.max_residual = f.max_residual;
    r.kind = "kappa";
    return r;
}

std::pair<int, int> default_kappa_window(const IterationTrace& t) {
    if (!(t.spec.epsilon > 0.0))
        throw std::invalid_argument("kappa window: defined for subcritical runs only");
    int lo = std::max(50, int(std::ceil(5.0 / std::sqrt(t.spec.epsilon))));
    int hi = -1;
    for (const auto& r : t.records)
        if (r.mean >= 1e-250) hi = r.n;
    return {lo, hi};
}

FitResult loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("loglog fit: need at least two points");
    std::vector<double> lx, ly;
    lx.reserve(xs.size());
    ly.reserve(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
            throw std::invalid_argument("loglog fit: points must be positive");
        lx.push_back(std::log(xs[i]));
        ly.push_back(std::log(ys[i]));
    }
    LsqFit f = lsq(lx, ly);
    FitResult r;
    r.slope = f.slope;
    r.intercept = f.intercept;
    r.win_lo = int(std::lround(xs.front()));
    r.win_hi = int(std::lround(xs.back()));
    r.max_residual = f.max_residual;
    r.kind = "loglog_slope";
    return r;
}

FitResult free_energy_estimate(const IterationTrace& t) {
    const int m = t.spec.m;
    const int N = int(t.records.size()) - 1;
    FitResult r;
    r.kind = "free_energy";
    r.win_lo = 0;
    r.win_hi = N;
    double prev = 0.0;
    double worst = 0.0;
    for (int n = 0; n <= N; ++n) {
        double f = (m == 2) ? std::ldexp(t.records[std::size_t(n)].mean, -n)
                            : t.records[std::size_t(n)].mean * std::pow(double(m), -double(n));
        if (n == 0) r.intercept = f;
        if (n > 0 && prev > 0.0) {
            // relative one-step increase; anything above 1e-12 breaks the
            // certificate (the sequence is non-increasing in exact arithmetic)
            double viol = (f - prev) / prev;
            worst = std::max(worst, viol);
        }
        prev = f;
        if (n == N) r.slope = f;
    }
    r.max_residual = worst;
    return r;
}

ContractionReport contraction_monitor(const ModelSpec& spec, double t, int M, int n_max,
                                      const TruncationPolicy& policy) {
    if (!(t > double(spec.m))) throw std::invalid_argument("contraction monitor: needs t > m");
    if (M < 0 || M > n_max) throw std::invalid_argument("contraction monitor: M out of range");
    ContractionReport rep{};
    rep.M = M;
    rep.t = t;
    rep.checked_to = n_max;

    IntPmf a = make_initial_law(spec);
    for (int n = 0; n < M; ++n) a = dr_step(a, spec, policy);
    double gM = weighted_moment(a, 0, t);  // E(t^{X_M}), may be inf
    rep.theta = (double(spec.m) / t) * ipow(gM, spec.m - 1);
    rep.hypothesis_met = rep.theta < 1.0;
    if (!rep.hypothesis_met) {
        rep.bound_holds = false;
        rep.worst_ratio = std::numeric_limits<double>::infinity();
        return rep;
    }
    rep.bound_holds = true;
    rep.worst_ratio = 0.0;
    double th_pow = 1.0;  // theta^{n-M}
    for (int n = M; n <= n_max; ++n) {
        double g = weighted_moment(a, 0, t);
        double ratio = (g - 1.0) / ((t - double(spec.m)) * th_pow);
        rep.worst_ratio = std::max(rep.worst_ratio, ratio);
        if (!(ratio <= 1.0 + 1e-8)) rep.bound_holds = false;
        if (n < n_max) {
            a = dr_step(a, spec, policy);
            th_pow *= rep.theta;
        }
    }
    return rep;
}

int first_contraction_index(const ModelSpec& spec, double t, int n_max,
                            const TruncationPolicy& policy) {
    IntPmf a = make_initial_law(spec);
    for (int M = 0; M <= n_max; ++M) {
        double g = weighted_moment(a, 0, t);
        double theta = (double(spec.m) / t) * ipow(g, spec.m - 1);
        if (theta < 1.0) return M;
        if (M < n_max) a = dr_step(a, spec, policy);
    }
    return -1;
}

LowerBoundReport initial_condition_lower_bound(const IterationTrace& t) {
    LowerBoundReport rep{{}, std::numeric_limits<double>::infinity(), -1, true};
    const ModelSpec& s = t.spec;
    const int n_top = std::min(int(t.records.size()) - 1, s.star.max_value() - 1);
    for (int n = 0; n <= n_top; ++n) {
        double bound = s.p * std::pow(double(s.m), double(n)) * s.star.prob_ge(n + 1);
        // truncated mass can only lower the traced mean; tau bounds the
        // lifetime diagnostic-weighted removal, amplified by at most m^n
        double allowance = t.policy.tau * std::pow(double(s.m), double(n));
        double margin = t.records[std::size_t(n)].mean - bound + allowance;
        rep.margins.push_back(margin);
        if (margin < rep.min_margin) {
            rep.min_margin = margin;
            rep.argmin = n;
        }
    }
    rep.pass = rep.min_margin >= 0.0;
    return rep;
}

std::vector<double> moment_ratio_series(const ModelSpec& spec, double C, int n_max,
                                        const TruncationPolicy& policy) {
    std::vector<double> out;
    out.reserve(std::size_t(std::max(0, n_max)));
    IntPmf a = make_initial_law(spec);
    for (int n = 1; n <= n_max; ++n) {
        a = dr_step(a, spec, policy);
        double s = double(spec.m) + C / double(n);
        out.push_back(weighted_moment(a, 2, s) / double(n));
    }
    return out;
}

}  // namespace drlab
