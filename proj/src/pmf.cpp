#include "drlab/pmf.hpp"
#include "drlab/sum.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace drlab {

namespace {

constexpr int kScaleBits = 500;           // stored sums are kept near 2^500
constexpr std::size_t kFftThreshold = 4096;
constexpr double kLn2 = 0.69314718055994530942;
constexpr double kPi = 3.14159265358979323846;

}  // namespace

// ---------- StarLaw / ModelSpec ----------

void StarLaw::validate() const {
    if (pmf.empty()) throw std::invalid_argument("star law: no atoms");
    KahanSum tot;
    double mass_ge2 = 0.0;
    for (const auto& [v, q] : pmf) {
        if (v < 1) throw std::invalid_argument("star law: atom values must be >= 1");
        if (!(q >= 0.0) || !std::isfinite(q))
            throw std::invalid_argument("star law: atom probabilities must be finite and >= 0");
        tot.add(q);
        if (v >= 2) mass_ge2 += q;
    }
    if (std::abs(tot.value() - 1.0) > 1e-12)
        throw std::invalid_argument("star law: probabilities must sum to 1 (within 1e-12)");
    if (!(mass_ge2 > 0.0))
        throw std::invalid_argument("star law: needs positive mass at values >= 2");
}

int StarLaw::max_value() const {
    int mx = 0;
    for (const auto& [v, q] : pmf)
        if (q > 0.0 && v > mx) mx = v;
    return mx;
}

double StarLaw::prob_ge(int k) const {
    KahanSum s;
    for (const auto& [v, q] : pmf)
        if (v >= k) s.add(q);
    return s.value();
}

double critical_p(const StarLaw& star, int m) {
    if (m < 2) throw std::invalid_argument("arity m must be >= 2");
    star.validate();
    // 1 / (1 + E[((m-1)X - 1) m^X]) over the star law
    KahanSum e;
    for (const auto& [v, q] : star.pmf) {
        double mz = std::pow(double(m), double(v));
        e.add(q * (double(m - 1) * v - 1.0) * mz);
    }
    return 1.0 / (1.0 + e.value());
}

ModelSpec ModelSpec::from_p(int m, StarLaw star, double p) {
    if (m < 2) throw std::invalid_argument("arity m must be >= 2");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0,1]");
    star.validate();
    ModelSpec s;
    s.m = m;
    s.star = std::move(star);
    s.p = p;
    s.p_c = critical_p(s.star, m);
    s.epsilon = s.p_c - p;
    return s;
}

ModelSpec ModelSpec::from_epsilon(int m, StarLaw star, double epsilon) {
    double pc = critical_p(star, m);
    ModelSpec s = from_p(m, std::move(star), pc - epsilon);
    s.epsilon = epsilon;  // keep the requested gap exact, not pc - (pc - eps)
    return s;
}

ModelSpec ModelSpec::at_critical(int m, StarLaw star) {
    double pc = critical_p(star, m);
    ModelSpec s = from_p(m, std::move(star), pc);
    s.epsilon = 0.0;
    return s;
}

// ---------- IntPmf basics ----------

double IntPmf::true_mass(std::size_t k) const {
    return std::ldexp(w[k], e2);
}

double IntPmf::log_scale() const {
    return double(e2) * kLn2;
}

double IntPmf::stored_sum() const {
    KahanSum s;
    for (double x : w) s.add(x);
    return s.value();
}

double IntPmf::total_mass() const {
    return std::ldexp(stored_sum(), e2);
}

void IntPmf::band_normalize() {
    double s = stored_sum();
    if (!(s > 0.0) || !std::isfinite(s)) return;
    int j = kScaleBits - std::ilogb(s);
    if (j == 0) return;
    for (double& x : w) x = std::ldexp(x, j);
    e2 -= j;
}

void IntPmf::trim_trailing_zeros() {
    while (w.size() > 1 && w.back() == 0.0) w.pop_back();
}

IntPmf IntPmf::delta0() {
    return from_atoms({{0, 1.0}});
}

IntPmf IntPmf::from_atoms(const std::vector<std::pair<int, double>>& atoms) {
    if (atoms.empty()) throw std::invalid_argument("pmf: no atoms");
    int mx = 0;
    for (const auto& [k, q] : atoms) {
        if (k < 0) throw std::invalid_argument("pmf: support must be non-negative");
        if (!(q >= 0.0)) throw std::invalid_argument("pmf: masses must be >= 0");
        mx = std::max(mx, k);
    }
    IntPmf a;
    a.w.assign(std::size_t(mx) + 1, 0.0);
    for (const auto& [k, q] : atoms) a.w[std::size_t(k)] += q;
    a.trim_trailing_zeros();
    a.band_normalize();
    return a;
}

IntPmf make_initial_law(const ModelSpec& spec) {
    std::vector<std::pair<int, double>> atoms;
    atoms.emplace_back(0, 1.0 - spec.p);
    for (const auto& [v, q] : spec.star.pmf) atoms.emplace_back(v, spec.p * q);
    return IntPmf::from_atoms(atoms);
}

// ---------- convolution ----------

namespace detail {

std::vector<double> conv_direct(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        double ai = a[i];
        if (ai == 0.0) continue;
        const double* bp = b.data();
        double* op = out.data() + i;
        for (std::size_t j = 0; j < b.size(); ++j) op[j] += ai * bp[j];
    }
    return out;
}

namespace {

void fft_inplace(std::vector<std::complex<double>>& v, bool inverse) {
    const std::size_t n = v.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {  // bit reversal
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(v[i], v[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * kPi / double(len) * (inverse ? 1.0 : -1.0);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> cw(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = v[i + k];
                std::complex<double> t = v[i + k + len / 2] * cw;
                v[i + k] = u + t;
                v[i + k + len / 2] = u - t;
                cw *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : v) x /= double(n);
}

}  // namespace

// Large-support path.  Error floor is ~1e-15 relative to the total mass, so
// entries can come back slightly negative; those are roundoff, not removed
// probability, and are clamped to zero without touching the defect (the
// per-step mass restoration absorbs the difference).
std::vector<double> conv_fft(const std::vector<double>& a, const std::vector<double>& b) {
    std::size_t need = a.size() + b.size() - 1;
    std::size_t n = 1;
    while (n < need) n <<= 1;
    std::vector<std::complex<double>> fa(n), fb(n);
    for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
    for (std::size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
    fft_inplace(fa, false);
    fft_inplace(fb, false);
    for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
    fft_inplace(fa, true);
    std::vector<double> out(need);
    for (std::size_t i = 0; i < need; ++i) out[i] = std::max(0.0, fa[i].real());
    return out;
}

}  // namespace detail

IntPmf convolve(const IntPmf& a, const IntPmf& b) {
    IntPmf out;
    if (a.size() > kFftThreshold && b.size() > kFftThreshold)
        out.w = detail::conv_fft(a.w, b.w);
    else
        out.w = detail::conv_direct(a.w, b.w);
    out.e2 = a.e2 + b.e2;
    out.defect = a.defect + b.defect - a.defect * b.defect;
    out.defect_w = a.defect_w + b.defect_w;
    out.trim_trailing_zeros();
    out.band_normalize();
    return out;
}

IntPmf convolve_power(const IntPmf& a, int m) {
    if (m < 1) throw std::invalid_argument("convolve_power: m must be >= 1");
    if (m == 1) return a;
    // binary exponentiation; every pairwise product is re-banded inside
    // convolve(), so intermediate stored values stay in the safe range
    IntPmf base = a;
    IntPmf result;
    bool have = false;
    int mm = m;
    while (mm > 0) {
        if (mm & 1) {
            result = have ? convolve(result, base) : base;
            have = true;
        }
        mm >>= 1;
        if (mm > 0) base = convolve(base, base);
    }
    return result;
}

// ---------- truncation ----------

namespace {

// diagnostic weight of index k in true units: (k+1) * base^k * mass_k
double diag_weight(const IntPmf& a, std::size_t k, int base) {
    double core = a.w[k];
    if (base != 2) core *= std::pow(double(base) / 2.0, double(k));
    return double(k + 1) * std::ldexp(core, a.e2 + int(k));
}

}  // namespace

double truncate(IntPmf& a, const TruncationPolicy& policy) {
    if (!(policy.tau >= 0.0)) throw std::invalid_argument("truncation: tau must be >= 0");
    a.trim_trailing_zeros();

    double removed_true = 0.0;

    // phase 1: remove the largest upper tail whose diagnostic weight,
    // together with everything removed before (lifetime budget), stays
    // within tau
    double budget = policy.tau - a.defect_w;
    double acc = 0.0;
    double removed_stored = 0.0;
    std::size_t keep = a.size();
    for (std::size_t k = a.size() - 1; k >= 1; --k) {
        double wk = diag_weight(a, k, policy.weight_base);
        if (!(acc + wk <= budget)) break;
        acc += wk;
        removed_stored += a.w[k];
        keep = k;
    }
    if (keep < a.size()) {
        a.w.resize(keep);
        double r = std::ldexp(removed_stored, a.e2);
        a.defect += r;
        a.defect_w += acc;
        removed_true += r;
        a.trim_trailing_zeros();
    }

    // phase 2: hard support cap; bypasses the tau test, refuses to throw
    // away real probability silently
    if (a.size() > policy.support_cap + 1) {
        double cap_stored = 0.0, cap_w = 0.0;
        for (std::size_t k = policy.support_cap + 1; k < a.size(); ++k) {
            cap_stored += a.w[k];
            cap_w += diag_weight(a, k, policy.weight_base);
        }
        double cap_true = std::ldexp(cap_stored, a.e2);
        if (cap_true > 1e-6) {
            std::ostringstream os;
            os << "truncation too aggressive: support cap " << policy.support_cap
               << " would remove mass " << cap_true;
            throw BudgetError(os.str());
        }
        a.w.resize(policy.support_cap + 1);
        a.defect += cap_true;
        a.defect_w += cap_w;
        removed_true += cap_true;
        a.trim_trailing_zeros();
    }

    return removed_true;
}

// ---------- one generation ----------

IntPmf dr_step(const IntPmf& a, const ModelSpec& spec, const TruncationPolicy& policy) {
    IntPmf c = convolve_power(a, spec.m);

    // shift-clip: mass at 0 and 1 collapses to 0, everything else moves down.
    // The defect tallies are lifetime totals of the iteration, so they come
    // from the input, not from convolve(), whose combination counts every
    // child subtree and would compound them by m per generation.
    IntPmf x;
    x.e2 = c.e2;
    x.defect = a.defect;
    x.defect_w = a.defect_w;
    if (c.size() == 1) {
        x.w = {c.w[0]};
    } else {
        x.w.resize(c.size() - 1);
        x.w[0] = c.w[0] + c.w[1];
        for (std::size_t k = 1; k + 1 < c.size(); ++k) x.w[k] = c.w[k + 1];
    }
    x.trim_trailing_zeros();

    TruncationPolicy pol = policy;
    pol.weight_base = spec.m;  // tail weights must match the model arity
    double removed = truncate(x, pol);

    // restoration: renormalize to the law conditioned on never meeting a
    // removed atom (mass exactly one); the weighted criterion caps what that
    // conditioning can do to any reported scalar at tau.  Beyond the mass the
    // truncation just removed, the factor must be ~1; a larger correction
    // means the representation broke.
    double tot = x.stored_sum();
    if (!(tot > 0.0) || !std::isfinite(tot))
        throw std::logic_error("dr_step: stored mass vanished or overflowed");
    int q = 0;
    double f = std::frexp(tot, &q);  // tot = f * 2^q, f in [0.5, 1)
    double target = 1.0;
    double factor_true = target / std::ldexp(f, q + x.e2);
    if (!(std::abs(factor_true - 1.0) <= 1e-9 + 2.0 * removed))
        throw std::logic_error("dr_step: mass drift exceeds restoration guard");
    int e_new = x.e2 + q - kScaleBits;
    double corr = std::ldexp(target / f, -e_new - q);
    for (double& v : x.w) v *= corr;
    x.e2 = e_new;
    return x;
}

// ---------- scalar functionals ----------

double mean(const IntPmf& a) {
    KahanSum s;
    for (std::size_t k = 1; k < a.size(); ++k) s.add(a.w[k] * double(k));
    return std::ldexp(s.value(), a.e2);
}

double survival(const IntPmf& a) {
    KahanSum s;
    for (std::size_t k = 1; k < a.size(); ++k) s.add(a.w[k]);
    return std::ldexp(s.value(), a.e2);
}

double weighted_moment(const IntPmf& a, int k, double s) {
    if (k < 0) throw std::invalid_argument("weighted_moment: k must be >= 0");
    if (!(s >= 0.0)) throw std::invalid_argument("weighted_moment: s must be >= 0");
    if (s == 0.0) return k == 0 ? a.true_mass(0) : 0.0;  // 0^0 = 1 convention

    KahanSum acc;
    const double r = s / 2.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.w[i] == 0.0) continue;
        double core = a.w[i];
        if (s != 2.0) core *= std::pow(r, double(i));
        double t = std::ldexp(core, a.e2 + int(i));
        double ik = 1.0;
        for (int j = 0; j < k; ++j) ik *= double(i);
        double term = t * ik;
        if (std::isinf(term)) return term;  // saturated; Kahan compensation would turn inf into nan
        acc.add(term);
    }
    return acc.value();
}

BoundedScalar mean_certified(const IntPmf& a) {
    return {mean(a), a.defect > 0.0};
}

}  // namespace drlab
