#pragma once
// Exact iteration of integer-supported probability mass functions under the
// map X' = (X_1 + ... + X_m - 1)^+ with X_i i.i.d.
//
// Representation: dense array of stored masses w[0..L] with an integer binary
// exponent e2; the true mass at k is w[k] * 2^e2.  Arrays are kept normalized
// so that sum(w) lands in [2^500, 2^501): convolution products then use the
// full double range, band rescales are exact (ldexp by integers), and tail
// entries stay representable down to true mass ~2^-1574.  Without this the
// m-linear map amplifies any relative mass error by m per generation, which
// destroys runs past n ~ 50.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace drlab {

// thrown when a configured resource limit would be crossed (support cap,
// node budget, trace exhaustion); maps to its own process exit code
struct BudgetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------- model ----------

struct StarLaw {
    // atoms (value k >= 1, probability); probabilities sum to 1 within 1e-12,
    // and P(value >= 2) must be positive.
    std::vector<std::pair<int, double>> pmf;

    void validate() const;  // throws std::invalid_argument on violation
    int max_value() const;
    double prob_ge(int k) const;  // P(value >= k)
};

double critical_p(const StarLaw& star, int m);  // 1/(1 + E[((m-1)X-1) m^X])

struct ModelSpec {
    int m = 2;
    StarLaw star;
    double p = 0.0;
    double p_c = 0.0;     // derived
    double epsilon = 0.0; // p_c - p, exactly as computed

    static ModelSpec from_p(int m, StarLaw star, double p);
    static ModelSpec from_epsilon(int m, StarLaw star, double epsilon);
    static ModelSpec at_critical(int m, StarLaw star);  // p = p_c
};

// ---------- pmf ----------

struct TruncationPolicy {
    // Tail removal is tested against the *diagnostic-weighted* tail mass
    // sum (k+1) * base^k * mass_k, accumulated over the pmf's lifetime, so
    // every reported scalar (mass, mean, survival, H(s<=base), H'(s<=base),
    // delta) stays within tau of its untruncated value and truncation is
    // idempotent.  Plain removed mass is booked into `defect` unweighted.
    double tau = 1e-16;
    std::size_t support_cap = std::size_t(1) << 22;
    int weight_base = 2;  // set to the model arity by iteration drivers
};

struct IntPmf {
    std::vector<double> w;  // stored masses; trailing entry nonzero
    int e2 = 0;             // true mass at k = w[k] * 2^e2
    double defect = 0.0;    // cumulative removed mass (true units)
    double defect_w = 0.0;  // cumulative diagnostic-weighted removed mass

    std::size_t size() const { return w.size(); }
    double true_mass(std::size_t k) const;
    double log_scale() const;      // ln(2) * e2
    double stored_sum() const;     // compensated sum of w
    double total_mass() const;     // stored_sum * 2^e2
    void band_normalize();         // exact rescale so stored_sum in [2^500, 2^501)
    void trim_trailing_zeros();

    static IntPmf delta0();
    static IntPmf from_atoms(const std::vector<std::pair<int, double>>& atoms);
};

IntPmf make_initial_law(const ModelSpec& spec);  // (1-p) delta_0 + p * star

IntPmf convolve(const IntPmf& a, const IntPmf& b);
IntPmf convolve_power(const IntPmf& a, int m);  // binary exponentiation

// Removes the upper tail permitted by the policy (see TruncationPolicy);
// then enforces the hard support cap (cap removal bypasses the tau test and
// throws std::runtime_error "truncation too aggressive" if its plain mass
// exceeds 1e-6).  Returns the plain mass removed.
double truncate(IntPmf& a, const TruncationPolicy& policy);

// One generation: m-fold self-convolution, shift-clip at zero, truncation,
// then an exact-targeted rescale back to total mass one -- the law
// conditioned on never meeting a removed atom.  The truncation criterion
// caps what that conditioning can do to any reported scalar at tau, and
// `defect`/`defect_w` accumulate the lifetime removal totals.
IntPmf dr_step(const IntPmf& a, const ModelSpec& spec, const TruncationPolicy& policy);

// ---------- scalar functionals ----------

double mean(const IntPmf& a);
double survival(const IntPmf& a);  // P(X >= 1)
// E(X^k s^X) over the stored support (compensated summation; s >= 0, k >= 0;
// overflow to +inf is propagated honestly).
double weighted_moment(const IntPmf& a, int k, double s);

struct BoundedScalar {
    double value;
    bool lower_bound_only;  // true when defect > 0: true value is >= value
};
BoundedScalar mean_certified(const IntPmf& a);

namespace detail {
// raw array convolutions, exposed so tests can cross-check the two paths
std::vector<double> conv_direct(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> conv_fft(const std::vector<double>& a, const std::vector<double>& b);
}  // namespace detail

}  // namespace drlab
