#pragma once

#include <voterag/rng.hpp>
#include <voterag/voting_math.hpp>

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace voterag {

struct SimConfig {
    EnsembleSpec ensemble;
    std::optional<AdversarialSpec> adversarial;
    std::uint64_t trials = 1;
    std::uint64_t seed = 0;

    void validate() const {
        ensemble.validate();
        if (adversarial) adversarial->validate();
        if (trials < 1) throw std::invalid_argument("SimConfig: trials must be >= 1");
    }
};

struct TrialOutcome {
    std::vector<char> error_indicators;  // X_i, one per agent
    int error_count = 0;                 // S
    bool majority_failed = false;        // S >= ceil(N/2)
};

struct SimEstimate {
    double point_estimate = 0.0;
    double standard_error = 0.0;
    std::uint64_t trials = 0;
};

// Stream domain tags; retrieval and generation stay decoupled even when the
// two stage configs share a seed.
inline constexpr std::uint64_t kSingleStageDomain = 0x766f74652d73696dULL;
inline constexpr std::uint64_t kRetrievalDomain = 0x7265747269657665ULL;
inline constexpr std::uint64_t kGenerationDomain = 0x67656e6572617465ULL;

namespace detail {

// Common-shock mixture: with probability rho every agent copies one shared
// Bernoulli(p) draw, otherwise each draws independently. Marginals stay p and
// Cov(X_i, X_j) = rho p (1-p), matching the correlated variance formula.
inline void fill_common_shock(std::vector<char>& x, std::size_t offset,
                              std::size_t count, double p, double rho,
                              SplitMix64& rng) {
    if (count == 0) return;
    if (rng.next_double() < rho) {
        const char shared = rng.next_bernoulli(p) ? 1 : 0;
        for (std::size_t i = 0; i < count; ++i) x[offset + i] = shared;
    } else {
        for (std::size_t i = 0; i < count; ++i)
            x[offset + i] = rng.next_bernoulli(p) ? 1 : 0;
    }
}

inline void finish_outcome(TrialOutcome& out, int majority_threshold) {
    out.error_count = 0;
    for (char x : out.error_indicators) out.error_count += x;
    out.majority_failed = out.error_count >= majority_threshold;
}

}  // namespace detail

inline TrialOutcome sample_correlated_errors(const EnsembleSpec& spec, SplitMix64& rng) {
    spec.validate();
    TrialOutcome out;
    out.error_indicators.resize(static_cast<std::size_t>(spec.n_agents));
    detail::fill_common_shock(out.error_indicators, 0, out.error_indicators.size(),
                              spec.error_rate, spec.correlation, rng);
    detail::finish_outcome(out, spec.majority_threshold());
    return out;
}

// One trial under the full config. The first floor(alpha * N) agents are
// designated always-wrong; the rest follow the common-shock model with the
// competent error rate.
inline void sample_trial_into(const SimConfig& config, SplitMix64& rng,
                              TrialOutcome& out) {
    const int n = config.ensemble.n_agents;
    out.error_indicators.assign(static_cast<std::size_t>(n), 0);
    if (config.adversarial) {
        const int fixed = static_cast<int>(
            std::floor(config.adversarial->adversary_fraction * n + 1e-9));
        for (int i = 0; i < fixed; ++i) out.error_indicators[i] = 1;
        detail::fill_common_shock(out.error_indicators, fixed, n - fixed,
                                  config.adversarial->competent_error,
                                  config.ensemble.correlation, rng);
    } else {
        detail::fill_common_shock(out.error_indicators, 0, n,
                                  config.ensemble.error_rate,
                                  config.ensemble.correlation, rng);
    }
    detail::finish_outcome(out, config.ensemble.majority_threshold());
}

inline TrialOutcome simulate_trial(const SimConfig& config, std::uint64_t trial_index,
                                   std::uint64_t domain = kSingleStageDomain) {
    SplitMix64 rng = make_stream(config.seed, domain, trial_index);
    TrialOutcome out;
    sample_trial_into(config, rng, out);
    return out;
}

namespace detail {

template <typename TrialFailed>
std::uint64_t count_failures(std::uint64_t lo, std::uint64_t hi, TrialFailed&& failed) {
    std::uint64_t count = 0;
    for (std::uint64_t t = lo; t < hi; ++t) count += failed(t) ? 1 : 0;
    return count;
}

// Partitions [0, trials) into contiguous chunks; the per-trial streams depend
// only on (seed, trial index), so the sum is identical for any worker count.
template <typename TrialFailed>
std::uint64_t count_failures_parallel(std::uint64_t trials, int n_jobs,
                                      TrialFailed&& failed) {
    if (n_jobs <= 1 || trials < 2) return count_failures(0, trials, failed);
    const std::uint64_t jobs = std::min<std::uint64_t>(n_jobs, trials);
    std::vector<std::uint64_t> partial(jobs, 0);
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    const std::uint64_t chunk = (trials + jobs - 1) / jobs;
    for (std::uint64_t j = 0; j < jobs; ++j) {
        const std::uint64_t lo = j * chunk;
        const std::uint64_t hi = std::min(trials, lo + chunk);
        workers.emplace_back([&, lo, hi, j] { partial[j] = count_failures(lo, hi, failed); });
    }
    for (auto& w : workers) w.join();
    std::uint64_t total = 0;
    for (std::uint64_t c : partial) total += c;
    return total;
}

inline SimEstimate to_estimate(std::uint64_t failures, std::uint64_t trials) {
    SimEstimate est;
    est.trials = trials;
    est.point_estimate = static_cast<double>(failures) / static_cast<double>(trials);
    est.standard_error =
        std::sqrt(est.point_estimate * (1.0 - est.point_estimate) / static_cast<double>(trials));
    return est;
}

}  // namespace detail

inline SimEstimate estimate_majority_error(const SimConfig& config, int n_jobs = 1) {
    config.validate();
    auto failed = [&config](std::uint64_t t) {
        thread_local TrialOutcome scratch;
        SplitMix64 rng = make_stream(config.seed, kSingleStageDomain, t);
        sample_trial_into(config, rng, scratch);
        return scratch.majority_failed;
    };
    const std::uint64_t failures =
        detail::count_failures_parallel(config.trials, n_jobs, failed);
    return detail::to_estimate(failures, config.trials);
}

// Two-stage run: retrieval failure forces overall failure; generation is
// sampled only when retrieval succeeds. Trial count and reporting follow the
// retrieval config.
inline SimEstimate estimate_two_stage_failure(const SimConfig& retrieval,
                                              const SimConfig& generation,
                                              int n_jobs = 1) {
    retrieval.validate();
    generation.validate();
    auto failed = [&](std::uint64_t t) {
        thread_local TrialOutcome scratch;
        SplitMix64 rng_r = make_stream(retrieval.seed, kRetrievalDomain, t);
        sample_trial_into(retrieval, rng_r, scratch);
        if (scratch.majority_failed) return true;
        SplitMix64 rng_g = make_stream(generation.seed, kGenerationDomain, t);
        sample_trial_into(generation, rng_g, scratch);
        return scratch.majority_failed;
    };
    const std::uint64_t failures =
        detail::count_failures_parallel(retrieval.trials, n_jobs, failed);
    return detail::to_estimate(failures, retrieval.trials);
}

// One sweep record: the estimate plus whichever closed-form references apply.
struct SweepRow {
    int n_agents = 0;
    double p = 0.0;
    double rho = 0.0;
    std::optional<AdversarialSpec> adversarial;
    std::uint64_t trials = 0;
    SimEstimate estimate;
    std::optional<double> exact;
    std::optional<double> hoeffding;
    std::optional<double> chebyshev;
};

inline SweepRow make_sweep_row(const SimConfig& config, int n_jobs = 1) {
    SweepRow row;
    row.n_agents = config.ensemble.n_agents;
    row.p = config.ensemble.error_rate;
    row.rho = config.ensemble.correlation;
    row.adversarial = config.adversarial;
    row.trials = config.trials;
    row.estimate = estimate_majority_error(config, n_jobs);
    if (!config.adversarial) {
        // reference columns only where the formula preconditions hold
        if (config.ensemble.correlation == 0.0)
            row.exact = exact_majority_error(config.ensemble);
        if (config.ensemble.correlation == 0.0 && config.ensemble.error_rate < 0.5)
            row.hoeffding = hoeffding_bound(config.ensemble);
        if (config.ensemble.error_rate < 0.5)
            row.chebyshev = chebyshev_correlated_bound(config.ensemble);
    }
    return row;
}

// Sweeps the agent count; base.n_agents is overwritten by each entry of
// n_values. Per-N runs use disjoint sub-streams of the same seed.
inline std::vector<SweepRow> sweep_agents(const EnsembleSpec& base,
                                          const std::optional<AdversarialSpec>& adversarial,
                                          const std::vector<int>& n_values,
                                          std::uint64_t trials, std::uint64_t seed,
                                          int n_jobs = 1) {
    std::vector<SweepRow> rows;
    rows.reserve(n_values.size());
    for (std::size_t i = 0; i < n_values.size(); ++i) {
        SimConfig config;
        config.ensemble = EnsembleSpec{n_values[i], base.error_rate, base.correlation};
        config.adversarial = adversarial;
        config.trials = trials;
        config.seed = mix64(seed ^ (0x9E3779B97F4A7C15ULL * (i + 1)));
        rows.push_back(make_sweep_row(config, n_jobs));
    }
    return rows;
}

namespace detail {

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline std::string format_optional(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string();
}

}  // namespace detail

inline constexpr const char* kSweepCsvHeader =
    "n_agents,p,rho,alpha,p_c,trials,estimate,std_err,exact,hoeffding,chebyshev";

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << kSweepCsvHeader << '\n';
    for (const SweepRow& row : rows) {
        out << row.n_agents << ',' << detail::format_number(row.p) << ','
            << detail::format_number(row.rho) << ',';
        if (row.adversarial) {
            // realized fraction after flooring, not the requested alpha
            const int fixed = static_cast<int>(std::floor(
                row.adversarial->adversary_fraction * row.n_agents + 1e-9));
            out << detail::format_number(static_cast<double>(fixed) / row.n_agents) << ','
                << detail::format_number(row.adversarial->competent_error);
        } else {
            out << ',';
        }
        out << ',' << row.trials << ',' << detail::format_number(row.estimate.point_estimate)
            << ',' << detail::format_number(row.estimate.standard_error) << ','
            << detail::format_optional(row.exact) << ','
            << detail::format_optional(row.hoeffding) << ','
            << detail::format_optional(row.chebyshev) << '\n';
    }
}

}  // namespace voterag
