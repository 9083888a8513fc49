#include "drlab/open_paths.hpp"
#include "drlab/analytics.hpp"
#include "drlab/sum.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace drlab {

namespace {

constexpr std::uint64_t kBlock = 4096;
constexpr long long kEnumerateCap = 729;  // 3^6 leaves

double ipow(double x, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= x;
    return r;
}

long long leaf_count_or_throw(int m, int n, std::uint64_t budget) {
    long long leaves = 1;
    for (int i = 0; i < n; ++i) {
        if (std::uint64_t(leaves) > budget / std::uint64_t(m)) {
            std::ostringstream os;
            os << "node budget exceeded: a depth-" << n << " tree holds " << m << "^" << n
               << " leaves (budget " << budget
               << "); use the transform recursion or the pmf iteration instead";
            throw BudgetError(os.str());
        }
        leaves *= m;
    }
    return leaves;
}

// leaf law (1-p) delta_0 + p star as integer thresholds on raw 64-bit draws
struct LeafSampler {
    std::uint64_t thr_nonzero;
    bool always_nonzero;
    bool single_atom;
    long long atom;
    std::vector<std::uint64_t> cum;  // cumulative star thresholds
    std::vector<long long> vals;

    LeafSampler(const StarLaw& star, double p) {
        always_nonzero = p >= 1.0;
        thr_nonzero = always_nonzero ? ~std::uint64_t(0)
                                     : std::uint64_t(p * 0x1.0p64);
        single_atom = star.pmf.size() == 1;
        atom = single_atom ? star.pmf[0].first : 0;
        if (!single_atom) {
            double acc = 0.0;
            for (const auto& [v, q] : star.pmf) {
                acc += q;
                cum.push_back(acc >= 1.0 ? ~std::uint64_t(0) : std::uint64_t(acc * 0x1.0p64));
                vals.push_back(v);
            }
            cum.back() = ~std::uint64_t(0);
        }
    }

    long long draw(SplitMix64& g) const {
        if (!always_nonzero && g.next() >= thr_nonzero) return 0;
        if (single_atom) return atom;
        std::uint64_t u = g.next();
        for (std::size_t i = 0; i < cum.size(); ++i)
            if (u <= cum[i]) return vals[i];
        return vals.back();
    }
};

// exact trailing zeros carry no information and would double the conv cost
// (at theta = 0 the array would otherwise grow with the companion support)
void trim_zeros(std::vector<double>& v) {
    while (v.size() > 1 && v.back() == 0.0) v.pop_back();
}

// plain true-unit self-convolution power (binary exponentiation)
std::vector<double> conv_power_plain(const std::vector<double>& a, int m) {
    std::vector<double> base = a, result;
    bool have = false;
    int mm = m;
    while (mm > 0) {
        if (mm & 1) {
            result = have ? detail::conv_direct(result, base) : base;
            have = true;
        }
        mm >>= 1;
        if (mm > 0) base = detail::conv_direct(base, base);
    }
    return result;
}

}  // namespace

// ---------- transform ----------

OpenPathTransform transform_init(const ModelSpec& critical_spec, double theta,
                                 const TruncationPolicy& policy) {
    if (critical_spec.epsilon != 0.0)
        throw std::invalid_argument("transform: defined on the critical line (epsilon == 0)");
    if (!(theta >= 0.0 && theta <= 1.0))
        throw std::invalid_argument("transform: theta must lie in [0,1]");
    OpenPathTransform t;
    t.theta = theta;
    t.spec = critical_spec;
    t.policy = policy;
    t.n = 0;
    t.companion = make_initial_law(critical_spec);
    t.a.resize(t.companion.size());
    for (std::size_t y = 0; y < t.companion.size(); ++y)
        t.a[y] = theta * t.companion.true_mass(y);  // N_0 = 1 on every leaf
    trim_zeros(t.a);
    return t;
}

void transform_step(OpenPathTransform& t) {
    const int m = t.spec.m;
    std::vector<double> conv = conv_power_plain(t.a, m);
    double q0m = ipow(t.companion.true_mass(0), m);

    // Y' = y >= 1 forces the gate open: a'(y) = conv(y+1).  At y = 0 the two
    // regimes meet: child sum 1 (open gate, clipped to zero) plus child sum 0
    // (shut gate, theta^0 times the probability that every child dies).
    std::vector<double> next(std::max<std::size_t>(1, conv.size() - 1), 0.0);
    next[0] = (conv.size() > 1 ? conv[1] : 0.0) + q0m;
    for (std::size_t y = 1; y < next.size(); ++y) next[y] = conv[y + 1];

    t.companion = dr_step(t.companion, t.spec, t.policy);

    // the companion's truncation caps the support; whatever a-mass lies past
    // it is booked, mirroring the companion's own defect
    if (next.size() > t.companion.size()) {
        KahanSum dropped;
        for (std::size_t y = t.companion.size(); y < next.size(); ++y) dropped.add(next[y]);
        t.tail_defect += dropped.value();
        next.resize(t.companion.size());
    }
    trim_zeros(next);
    t.a = std::move(next);
    t.n += 1;
}

void transform_validate(const OpenPathTransform& t) {
    if (t.a.size() > t.companion.size())
        throw std::logic_error("transform: support exceeds the companion");
    // the coefficients and the companion evolve along different numeric paths
    // (plain convolution vs the scaled pipeline with its per-step restoration),
    // so the comparisons carry the same drift allowance as the step guard
    KahanSum tot;
    for (std::size_t y = 0; y < t.a.size(); ++y) {
        double q = t.companion.true_mass(y);
        if (!(t.a[y] >= 0.0))
            throw std::logic_error("transform: negative coefficient");
        if (t.a[y] > q * (1.0 + 1e-9) + 1e-300)
            throw std::logic_error("transform: coefficient exceeds the companion mass");
        if (t.theta == 1.0 && std::abs(t.a[y] - q) > 1e-9 * std::max(q, 1e-3))
            throw std::logic_error("transform: theta=1 must reproduce the companion");
        tot.add(t.a[y]);
    }
    if (tot.value() > 1.0 + 1e-9)
        throw std::logic_error("transform: total exceeds 1");
}

double transform_survival_part(const OpenPathTransform& t) {
    KahanSum s;
    for (std::size_t y = 1; y < t.a.size(); ++y) s.add(t.a[y]);
    return s.value();
}

double transform_open_prob(const OpenPathTransform& t) {
    return 1.0 - t.a[0];
}

// ---------- coupling ----------

CouplingReport coupling_check(const ModelSpec& spec, int n_max, const TruncationPolicy& policy) {
    if (spec.epsilon < 0.0)
        throw std::invalid_argument("coupling: needs p <= p_c");
    const double r = spec.p / spec.p_c;
    ModelSpec crit = ModelSpec::at_critical(spec.m, spec.star);

    CouplingReport rep;
    rep.min_margin = std::numeric_limits<double>::infinity();
    rep.argmin = -1;

    IntPmf ap = make_initial_law(spec);
    IntPmf ac = make_initial_law(crit);
    for (int n = 0; n <= n_max; ++n) {
        if (n > 0) {
            ap = dr_step(ap, spec, policy);
            ac = dr_step(ac, crit, policy);
        }
        double mn = std::pow(double(spec.m), double(n));
        double rpow = (r >= 1.0) ? 1.0 : std::exp(mn * std::log(r));
        CouplingRow row;
        row.n = n;
        row.lhs = survival(ap);
        row.rhs = rpow * survival(ac);
        row.margin = row.lhs - row.rhs;
        if (row.margin < rep.min_margin) {
            rep.min_margin = row.margin;
            rep.argmin = n;
        }
        rep.rows.push_back(row);
    }
    rep.pass = rep.min_margin >= -1e-12;
    rep.defect_final = std::max(ap.defect, ac.defect);
    return rep;
}

// ---------- tree samplers ----------

namespace {

// Streams the m^n leaves through an odometer of per-level partial sums, so a
// full tree costs O(1) state per level and one pass over the leaves.  `emit`
// consumes one leaf draw and returns (y, n_open) pushed up the tree.
template <typename LeafFn>
std::pair<long long, long long> fold_tree(int n, int m, long long leaves, LeafFn&& leaf) {
    if (n == 0) return leaf();
    std::vector<long long> ya(std::size_t(n) + 1, 0), na(std::size_t(n) + 1, 0);
    std::vector<int> cnt(std::size_t(n) + 1, 0);
    for (long long L = 0; L < leaves; ++L) {
        auto [y, k] = leaf();
        int lvl = 0;
        for (;;) {
            ya[std::size_t(lvl)] += y;
            na[std::size_t(lvl)] += k;
            if (++cnt[std::size_t(lvl)] < m) break;
            long long s = ya[std::size_t(lvl)];
            y = s >= 1 ? s - 1 : 0;       // root clip
            k = s >= 1 ? na[std::size_t(lvl)] : 0;  // shut gate kills all paths
            ya[std::size_t(lvl)] = 0;
            na[std::size_t(lvl)] = 0;
            cnt[std::size_t(lvl)] = 0;
            ++lvl;
        }
    }
    return {ya[std::size_t(n)], na[std::size_t(n)]};
}

}  // namespace

TreeSample sample_yn_pair(const ModelSpec& spec, int n, SplitMix64& g,
                          std::uint64_t node_budget) {
    long long leaves = leaf_count_or_throw(spec.m, n, node_budget);
    LeafSampler ls(spec.star, spec.p);
    auto [y, k] = fold_tree(n, spec.m, leaves, [&] {
        return std::pair<long long, long long>(ls.draw(g), 1);
    });
    return {y, k};
}

CoupledSample sample_coupled(const ModelSpec& spec, int n, SplitMix64& g,
                             std::uint64_t node_budget) {
    if (spec.epsilon < 0.0)
        throw std::invalid_argument("coupled sampler: needs p <= p_c");
    long long leaves = leaf_count_or_throw(spec.m, n, node_budget);
    LeafSampler ls(spec.star, spec.p_c);
    const double keep = spec.p / spec.p_c;
    const bool always_keep = keep >= 1.0;
    const std::uint64_t thr_keep = always_keep ? ~std::uint64_t(0)
                                               : std::uint64_t(keep * 0x1.0p64);

    if (n == 0) {
        long long y = ls.draw(g);
        long long x = (y > 0 && !always_keep && g.next() >= thr_keep) ? 0 : y;
        return {x, y, 1};
    }
    const int m = spec.m;
    std::vector<long long> xa(std::size_t(n) + 1, 0), ya(std::size_t(n) + 1, 0),
        na(std::size_t(n) + 1, 0);
    std::vector<int> cnt(std::size_t(n) + 1, 0);
    for (long long L = 0; L < leaves; ++L) {
        long long y = ls.draw(g);
        // thin the nonzero leaves: the x-tree keeps them with prob p/p_c,
        // which reproduces the leaf law (1-p) delta_0 + p star exactly
        long long x = (y > 0 && !always_keep && g.next() >= thr_keep) ? 0 : y;
        long long k = 1;
        int lvl = 0;
        for (;;) {
            xa[std::size_t(lvl)] += x;
            ya[std::size_t(lvl)] += y;
            na[std::size_t(lvl)] += k;
            if (++cnt[std::size_t(lvl)] < m) break;
            long long sx = xa[std::size_t(lvl)];
            long long sy = ya[std::size_t(lvl)];
            x = sx >= 1 ? sx - 1 : 0;
            y = sy >= 1 ? sy - 1 : 0;
            k = sy >= 1 ? na[std::size_t(lvl)] : 0;
            xa[std::size_t(lvl)] = 0;
            ya[std::size_t(lvl)] = 0;
            na[std::size_t(lvl)] = 0;
            cnt[std::size_t(lvl)] = 0;
            ++lvl;
        }
    }
    return {xa[std::size_t(n)], ya[std::size_t(n)], na[std::size_t(n)]};
}

std::pair<long long, long long> evaluate_tree(int n, int m,
                                              const std::vector<long long>& leaves) {
    long long want = 1;
    for (int i = 0; i < n; ++i) want *= m;
    if (static_cast<long long>(leaves.size()) != want)
        throw std::invalid_argument("evaluate_tree: leaf count must be m^n");
    std::size_t idx = 0;
    return fold_tree(n, m, want, [&] {
        return std::pair<long long, long long>(leaves[idx++], 1);
    });
}

long long enumerate_definitional(int n, int m, const std::vector<long long>& leaves) {
    long long want = 1;
    for (int i = 0; i < n; ++i) want *= m;
    if (want > kEnumerateCap)
        throw std::invalid_argument("enumerate_definitional: capped at 729 leaves");
    if (static_cast<long long>(leaves.size()) != want)
        throw std::invalid_argument("enumerate_definitional: leaf count must be m^n");

    // level values Y[l][i] for the full tree
    std::vector<std::vector<long long>> Y(std::size_t(n) + 1);
    Y[0] = leaves;
    for (int l = 0; l < n; ++l) {
        std::size_t width = Y[std::size_t(l)].size() / std::size_t(m);
        Y[std::size_t(l) + 1].resize(width);
        for (std::size_t i = 0; i < width; ++i) {
            long long s = 0;
            for (int c = 0; c < m; ++c) s += Y[std::size_t(l)][i * std::size_t(m) + std::size_t(c)];
            Y[std::size_t(l) + 1][i] = s >= 1 ? s - 1 : 0;
        }
    }

    // a path v_0 (leaf) .. v_n (root) is open when for every i < n the leaf
    // value plus all sibling contributions collected so far stays >= i+1
    long long open = 0;
    for (long long L = 0; L < want; ++L) {
        std::size_t idx = std::size_t(L);
        long long run = Y[0][idx];
        bool ok = true;
        for (int i = 0; i < n; ++i) {
            std::size_t parent = idx / std::size_t(m);
            long long sib = 0;
            for (int c = 0; c < m; ++c) sib += Y[std::size_t(i)][parent * std::size_t(m) + std::size_t(c)];
            sib -= Y[std::size_t(i)][idx];
            run += sib;
            if (run < i + 1) {
                ok = false;
                break;
            }
            idx = parent;
        }
        if (ok) ++open;
    }
    return open;
}

// ---------- Monte Carlo ----------

namespace {

// fixed-block reduction shared by the scalar and multi-statistic paths;
// per-block partials are combined in block order, so the result is invariant
// in the worker count
template <int K, typename StatFn>
void mc_blocks(const StatFn& stat, std::uint64_t count, std::uint64_t seed, int workers,
               double mean_out[K], double se_out[K]) {
    const std::uint64_t nblocks = (count + kBlock - 1) / kBlock;
    struct Part {
        double sum[K];
        double sumsq[K];
    };
    std::vector<Part> parts(nblocks);
    std::atomic<std::uint64_t> next{0};

    auto work = [&] {
        for (;;) {
            std::uint64_t b = next.fetch_add(1);
            if (b >= nblocks) return;
            std::uint64_t lo = b * kBlock;
            std::uint64_t hi = std::min(count, lo + kBlock);
            KahanSum s[K], s2[K];
            double v[K];
            for (std::uint64_t i = lo; i < hi; ++i) {
                SplitMix64 g = stream_for(seed, i);
                stat(g, v);
                for (int k = 0; k < K; ++k) {
                    s[k].add(v[k]);
                    s2[k].add(v[k] * v[k]);
                }
            }
            for (int k = 0; k < K; ++k) {
                parts[b].sum[k] = s[k].value();
                parts[b].sumsq[k] = s2[k].value();
            }
        }
    };

    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(std::size_t(workers));
        for (int wkr = 0; wkr < workers; ++wkr) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    for (int k = 0; k < K; ++k) {
        KahanSum S, S2;
        for (std::uint64_t b = 0; b < nblocks; ++b) {
            S.add(parts[b].sum[k]);
            S2.add(parts[b].sumsq[k]);
        }
        double mu = S.value() / double(count);
        double var = count > 1
                         ? std::max(0.0, (S2.value() - double(count) * mu * mu) / double(count - 1))
                         : 0.0;
        mean_out[k] = mu;
        se_out[k] = std::sqrt(var / double(count));
    }
}

}  // namespace

McEstimate mc_estimate(const std::function<double(SplitMix64&)>& statistic,
                       std::uint64_t count, std::uint64_t seed, int workers) {
    if (count < 1) throw std::invalid_argument("mc_estimate: count must be >= 1");
    double mu[1], se[1];
    mc_blocks<1>([&](SplitMix64& g, double* v) { v[0] = statistic(g); }, count, seed,
                 workers, mu, se);
    return {mu[0], se[0], count, seed};
}

DeviationReport deviation_probe(const ModelSpec& critical_spec, int n, int j,
                                std::uint64_t count, std::uint64_t seed, int workers,
                                std::uint64_t node_budget, const TruncationPolicy& policy) {
    if (n < 1 || j < 1) throw std::invalid_argument("deviation probe: needs n >= 1 and j >= 1");
    if (count < 1) throw std::invalid_argument("deviation probe: count must be >= 1");
    leaf_count_or_throw(critical_spec.m, n, node_budget);  // fail before spending time

    const long long thr = (static_cast<long long>(n) + j - 1) / j;  // ceil(n/j)
    const long long n_cap = static_cast<long long>(j) * n;

    double mu[3], se[3];
    mc_blocks<3>(
        [&](SplitMix64& g, double* v) {
            TreeSample s = sample_yn_pair(critical_spec, n, g, node_budget);
            v[0] = (s.y >= thr && s.n_open >= 1 && s.n_open <= n_cap) ? 1.0 : 0.0;
            v[1] = (s.y >= thr) ? 1.0 : 0.0;
            v[2] = (s.y >= 1) ? 1.0 : 0.0;
        },
        count, seed, workers, mu, se);

    DeviationReport rep{};
    rep.n = n;
    rep.j = j;
    rep.count = count;
    rep.seed = seed;
    rep.estimate = mu[0];
    rep.std_error = se[0];
    rep.p_y_ge_thr = mu[1];
    rep.p_y_ge_1 = mu[2];
    rep.conditional = mu[1] > 0.0 ? mu[0] / mu[1] : 0.0;

    IntPmf at_n = iterate_to(critical_spec, n, policy);
    rep.h_n_m = weighted_moment(at_n, 0, double(critical_spec.m));
    rep.defect = at_n.defect;
    rep.base = std::pow(double(critical_spec.m), -double(n) / double(j)) * rep.h_n_m;
    if (rep.estimate == 0.0) {
        rep.ceiling = rep.base;
        rep.within = true;
    } else {
        rep.ceiling = rep.base * (1.0 + 4.0 * rep.std_error / rep.estimate);
        rep.within = rep.estimate <= rep.ceiling;
    }
    return rep;
}

}  // namespace drlab
