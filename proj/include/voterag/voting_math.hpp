#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace voterag {

// An ensemble of N agents that each err independently with probability p,
// with average pairwise error correlation rho. The majority vote fails when
// at least ceil(N/2) agents err; an exact tie on even N counts as failure.
struct EnsembleSpec {
    int n_agents = 1;
    double error_rate = 0.0;
    double correlation = 0.0;

    int majority_threshold() const { return (n_agents + 1) / 2; }

    void validate() const {
        if (n_agents < 1)
            throw std::invalid_argument("EnsembleSpec: n_agents must be >= 1");
        if (!(error_rate >= 0.0 && error_rate <= 1.0))
            throw std::invalid_argument("EnsembleSpec: error_rate must lie in [0,1]");
        if (!(correlation >= 0.0 && correlation <= 1.0))
            throw std::invalid_argument("EnsembleSpec: correlation must lie in [0,1]");
    }
};

// A fraction alpha of agents always err; the rest err with probability p_c.
struct AdversarialSpec {
    double adversary_fraction = 0.0;
    double competent_error = 0.0;

    void validate() const {
        if (!(adversary_fraction >= 0.0 && adversary_fraction <= 1.0))
            throw std::invalid_argument("AdversarialSpec: adversary_fraction must lie in [0,1]");
        if (!(competent_error >= 0.0 && competent_error <= 1.0))
            throw std::invalid_argument("AdversarialSpec: competent_error must lie in [0,1]");
    }
};

// Two independent voting stages: retrieval (N_r, p_r) and generation (N_g, p_g).
struct TwoStageSpec {
    EnsembleSpec retrieval;
    EnsembleSpec generation;

    void validate() const {
        retrieval.validate();
        generation.validate();
    }
};

namespace detail {

// Exact binomial coefficient; fits unsigned 64-bit for n <= 64
// (C(64,32) = 1832624140942590534 < 2^63).
inline unsigned long long binomial_u64(int n, int k) {
    if (k < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    unsigned __int128 c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    }
    return static_cast<unsigned long long>(c);
}

inline double binomial_upper_tail(int n, int m, double p) {
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    if (n <= 64) {
        long double total = 0.0L;
        const long double lp = p;
        for (int k = m; k <= n; ++k) {
            total += static_cast<long double>(binomial_u64(n, k)) *
                     std::pow(lp, k) * std::pow(1.0L - lp, n - k);
        }
        return static_cast<double>(std::min(total, 1.0L));
    }
    // log-space beyond exact-integer range
    const double logp = std::log(p);
    const double log1mp = std::log1p(-p);
    double max_log = -HUGE_VAL;
    for (int k = m; k <= n; ++k) {
        const double lg = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                          std::lgamma(n - k + 1.0) + k * logp + (n - k) * log1mp;
        if (lg > max_log) max_log = lg;
    }
    long double total = 0.0L;
    for (int k = m; k <= n; ++k) {
        const double lg = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                          std::lgamma(n - k + 1.0) + k * logp + (n - k) * log1mp;
        total += std::exp(static_cast<long double>(lg - max_log));
    }
    const double result = static_cast<double>(std::exp(static_cast<long double>(max_log)) * total);
    return std::min(1.0, std::max(0.0, result));
}

inline void require_independent(const EnsembleSpec& spec, const char* op) {
    if (spec.correlation != 0.0)
        throw std::invalid_argument(std::string(op) + ": formula assumes rho = 0");
}

inline void require_better_than_random(const EnsembleSpec& spec, const char* op) {
    if (spec.error_rate >= 0.5)
        throw std::invalid_argument(std::string(op) + ": requires p < 1/2");
}

}  // namespace detail

// Exact failure probability of the majority vote under i.i.d. agents:
// sum_{k=m}^{N} C(N,k) p^k (1-p)^(N-k) with m = ceil(N/2).
inline double exact_majority_error(const EnsembleSpec& spec) {
    spec.validate();
    detail::require_independent(spec, "exact_majority_error");
    return detail::binomial_upper_tail(spec.n_agents, spec.majority_threshold(),
                                       spec.error_rate);
}

// Hoeffding tail bound exp(-2N(1/2 - p)^2); valid only for p < 1/2.
inline double hoeffding_bound(const EnsembleSpec& spec) {
    spec.validate();
    detail::require_independent(spec, "hoeffding_bound");
    detail::require_better_than_random(spec, "hoeffding_bound");
    const double gap = 0.5 - spec.error_rate;
    const double v = std::exp(-2.0 * spec.n_agents * gap * gap);
    return std::min(1.0, std::max(0.0, v));
}

// Chebyshev bound with Var(S) = Np(1-p)(1 + (N-1)rho), before clamping.
inline double chebyshev_correlated_raw(const EnsembleSpec& spec) {
    spec.validate();
    detail::require_better_than_random(spec, "chebyshev_correlated_bound");
    const double p = spec.error_rate;
    const double n = spec.n_agents;
    const double gap = 0.5 - p;
    return p * (1.0 - p) * (1.0 + (n - 1.0) * spec.correlation) / (n * gap * gap);
}

inline double chebyshev_correlated_bound(const EnsembleSpec& spec) {
    return std::min(1.0, chebyshev_correlated_raw(spec));
}

// Heuristic two-stage bound: sum of the per-stage Hoeffding terms.
inline double two_stage_bound_raw(const TwoStageSpec& spec) {
    spec.validate();
    detail::require_independent(spec.retrieval, "two_stage_bound");
    detail::require_independent(spec.generation, "two_stage_bound");
    detail::require_better_than_random(spec.retrieval, "two_stage_bound (retrieval)");
    detail::require_better_than_random(spec.generation, "two_stage_bound (generation)");
    const double gr = 0.5 - spec.retrieval.error_rate;
    const double gg = 0.5 - spec.generation.error_rate;
    return std::exp(-2.0 * spec.retrieval.n_agents * gr * gr) +
           std::exp(-2.0 * spec.generation.n_agents * gg * gg);
}

inline double two_stage_bound(const TwoStageSpec& spec) {
    return std::min(1.0, two_stage_bound_raw(spec));
}

// Exact union form Pr(not A) + Pr(not B | A): both terms from the exact
// binomial tail of the corresponding stage.
inline double two_stage_exact_raw(const TwoStageSpec& spec) {
    return exact_majority_error(spec.retrieval) + exact_majority_error(spec.generation);
}

inline double two_stage_exact(const TwoStageSpec& spec) {
    return std::min(1.0, two_stage_exact_raw(spec));
}

// Blended per-agent error with adversaries: p_eff = alpha + (1-alpha) p_c.
inline double effective_error(const AdversarialSpec& spec) {
    spec.validate();
    return spec.adversary_fraction + (1.0 - spec.adversary_fraction) * spec.competent_error;
}

// Largest adversary fraction that keeps p_eff below 1/2:
// alpha* = (1/2 - p_c) / (1 - p_c). Negative when p_c > 1/2.
inline double adversarial_threshold(double competent_error) {
    if (!(competent_error >= 0.0 && competent_error < 1.0))
        throw std::invalid_argument("adversarial_threshold: requires 0 <= p_c < 1");
    return (0.5 - competent_error) / (1.0 - competent_error);
}

}  // namespace voterag
