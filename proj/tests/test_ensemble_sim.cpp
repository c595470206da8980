#include "doctest.h"

#include <voterag/ensemble_sim.hpp>

#include <cmath>
#include <sstream>

using namespace voterag;

namespace {

SimConfig cfg(int n, double p, double rho, std::uint64_t trials, std::uint64_t seed) {
    SimConfig c;
    c.ensemble = EnsembleSpec{n, p, rho};
    c.trials = trials;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("perfect shock makes all indicators identical") {
    EnsembleSpec spec{7, 0.4, 1.0};
    SplitMix64 rng(123);
    for (int t = 0; t < 2000; ++t) {
        TrialOutcome out = sample_correlated_errors(spec, rng);
        REQUIRE(out.error_indicators.size() == 7);
        for (char x : out.error_indicators) CHECK(x == out.error_indicators[0]);
        CHECK(out.error_count == (out.error_indicators[0] ? 7 : 0));
    }
}

TEST_CASE("common-shock sampler reproduces the covariance identity") {
    // N=2, p=0.3, rho=0.5: E[X1 X2] = rho*p + (1-rho)*p^2 = 0.195,
    // Cov = 0.105 = rho * p(1-p). Frozen from the identity in the
    // correlated-variance formula, not from the sampler.
    const std::uint64_t trials = 1'000'000;
    EnsembleSpec spec{2, 0.3, 0.5};
    std::uint64_t both = 0, first = 0, second = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        SplitMix64 rng = make_stream(99, 7, t);
        TrialOutcome out = sample_correlated_errors(spec, rng);
        first += out.error_indicators[0];
        second += out.error_indicators[1];
        both += out.error_indicators[0] & out.error_indicators[1];
    }
    const double m1 = double(first) / trials;
    const double m2 = double(second) / trials;
    const double m12 = double(both) / trials;
    const double se12 = std::sqrt(0.195 * 0.805 / trials);
    CHECK(std::fabs(m1 - 0.3) < 3 * std::sqrt(0.3 * 0.7 / trials));
    CHECK(std::fabs(m2 - 0.3) < 3 * std::sqrt(0.3 * 0.7 / trials));
    CHECK(std::fabs(m12 - 0.195) < 3 * se12);
    // propagated slack for the covariance itself
    CHECK(std::fabs((m12 - m1 * m2) - 0.105) < 4 * se12);
}

TEST_CASE("rho=0 keeps agents uncorrelated") {
    const std::uint64_t trials = 1'000'000;
    EnsembleSpec spec{2, 0.3, 0.0};
    std::uint64_t both = 0, first = 0, second = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        SplitMix64 rng = make_stream(7, 11, t);
        TrialOutcome out = sample_correlated_errors(spec, rng);
        first += out.error_indicators[0];
        second += out.error_indicators[1];
        both += out.error_indicators[0] & out.error_indicators[1];
    }
    const double cov = double(both) / trials -
                       (double(first) / trials) * (double(second) / trials);
    CHECK(std::fabs(cov) < 3 * std::sqrt(0.09 * 0.91 / trials));
}

TEST_CASE("estimate_majority_error converges to the enumeration value") {
    SimEstimate est = estimate_majority_error(cfg(3, 0.3, 0.0, 1'000'000, 42));
    CHECK(est.trials == 1'000'000);
    CHECK(std::fabs(est.point_estimate - 0.216) < 3 * est.standard_error);
    CHECK(est.standard_error ==
          doctest::Approx(std::sqrt(est.point_estimate * (1 - est.point_estimate) / 1e6)));

    // p = 0: no agent ever errs
    SimEstimate zero = estimate_majority_error(cfg(5, 0.0, 0.0, 100, 1));
    CHECK(zero.point_estimate == 0.0);
    CHECK(zero.standard_error == 0.0);

    // perfect shock: the ensemble collapses to a single agent
    SimEstimate shock = estimate_majority_error(cfg(5, 0.2, 1.0, 1'000'000, 42));
    CHECK(std::fabs(shock.point_estimate - 0.2) < 3 * shock.standard_error);
}

TEST_CASE("estimates agree with the exact formula on the oracle grid") {
    for (int n : {1, 3, 5, 7, 9}) {
        for (double p : {0.1, 0.2, 0.3, 0.4}) {
            SimConfig c = cfg(n, p, 0.0, 100'000, 2026);
            SimEstimate est = estimate_majority_error(c);
            const double exact = exact_majority_error(c.ensemble);
            CHECK(std::fabs(est.point_estimate - exact) <= 3 * est.standard_error + 1e-9);
        }
    }
}

TEST_CASE("chebyshev bound contains correlated estimates") {
    for (int n : {1, 3, 5, 7, 9}) {
        for (double p : {0.1, 0.2, 0.3, 0.4}) {
            for (double rho : {0.0, 0.25, 0.5}) {
                SimConfig c = cfg(n, p, rho, 100'000, 777);
                SimEstimate est = estimate_majority_error(c);
                const double bound = chebyshev_correlated_bound(c.ensemble);
                CHECK(est.point_estimate <= bound + 3 * est.standard_error);
            }
        }
    }
}

TEST_CASE("seeded runs are bit-identical and worker-count independent") {
    SimConfig c = cfg(7, 0.35, 0.25, 200'000, 2024);
    SimEstimate a = estimate_majority_error(c, 1);
    SimEstimate b = estimate_majority_error(c, 1);
    SimEstimate d = estimate_majority_error(c, 4);
    CHECK(a.point_estimate == b.point_estimate);
    CHECK(a.point_estimate == d.point_estimate);
    CHECK(a.standard_error == d.standard_error);

    SimEstimate other = estimate_majority_error(cfg(7, 0.35, 0.25, 200'000, 2025));
    CHECK(a.point_estimate != other.point_estimate);
}

TEST_CASE("two-stage failure matches the independent-stage oracle") {
    // 1 - (1 - 0.216)^2 = 0.385344, from the enumeration oracle
    SimConfig r = cfg(3, 0.3, 0.0, 1'000'000, 5);
    SimConfig g = cfg(3, 0.3, 0.0, 1'000'000, 6);
    SimEstimate est = estimate_two_stage_failure(r, g);
    CHECK(std::fabs(est.point_estimate - 0.385344) < 3 * est.standard_error);

    TwoStageSpec spec{r.ensemble, g.ensemble};
    CHECK(est.point_estimate <= two_stage_bound(spec) + 3 * est.standard_error);
    CHECK(est.point_estimate <= two_stage_exact(spec) + 3 * est.standard_error);

    // both stages perfect
    SimEstimate zero = estimate_two_stage_failure(cfg(3, 0.0, 0.0, 1000, 1),
                                                  cfg(3, 0.0, 0.0, 1000, 1));
    CHECK(zero.point_estimate == 0.0);

    // retrieval never fails: reduces to the single-stage oracle
    SimEstimate red = estimate_two_stage_failure(cfg(3, 0.0, 0.0, 1'000'000, 9),
                                                 cfg(3, 0.3, 0.0, 1'000'000, 9));
    CHECK(std::fabs(red.point_estimate - 0.216) < 3 * red.standard_error);
}

TEST_CASE("two-stage stages stay independent even with equal seeds") {
    // identical configs and seeds must not couple the stage draws;
    // failure prob would be 0.216 under full coupling vs 0.385344 independent
    SimConfig r = cfg(3, 0.3, 0.0, 500'000, 31);
    SimEstimate est = estimate_two_stage_failure(r, r);
    CHECK(std::fabs(est.point_estimate - 0.385344) < 3.5 * est.standard_error);
}

TEST_CASE("adversarial trials pin down always-wrong agents") {
    // alpha = 0.45, N = 15 -> 6 fixed adversaries + 9 competent at p_c = 0.2:
    // error = P(Binom(9, 0.2) >= 2) = 0.5638 (enumeration oracle), above 1/2
    SimConfig above = cfg(15, 0.2, 0.0, 100'000, 77);
    above.adversarial = AdversarialSpec{0.45, 0.2};
    SimEstimate e_above = estimate_majority_error(above);
    CHECK(e_above.point_estimate > 0.5);

    // alpha = 0.25 (0.125 under the 0.375 threshold) -> collapse does not occur
    SimConfig below = cfg(15, 0.2, 0.0, 100'000, 77);
    below.adversarial = AdversarialSpec{0.25, 0.2};
    SimEstimate e_below = estimate_majority_error(below);
    CHECK(e_below.point_estimate < 0.4);

    // alpha = 1: everyone always errs
    SimConfig all = cfg(5, 0.2, 0.0, 500, 3);
    all.adversarial = AdversarialSpec{1.0, 0.0};
    CHECK(estimate_majority_error(all).point_estimate == 1.0);
}

TEST_CASE("sweep_agents reproduces the scaling trend") {
    std::vector<SweepRow> rows =
        sweep_agents(EnsembleSpec{0, 0.4, 0.0}, std::nullopt, {3, 5, 7}, 100'000, 4242);
    REQUIRE(rows.size() == 3);
    const double expected[] = {0.352, 0.31744, 0.289792};  // enumeration oracle
    for (int i = 0; i < 3; ++i) {
        CHECK(std::fabs(rows[i].estimate.point_estimate - expected[i]) <=
              3 * rows[i].estimate.standard_error);
        REQUIRE(rows[i].exact.has_value());
        CHECK(*rows[i].exact == doctest::Approx(expected[i]).epsilon(1e-12));
        CHECK(rows[i].hoeffding.has_value());
        CHECK(rows[i].chebyshev.has_value());
    }
    // accuracy non-decreasing in N within noise
    CHECK(rows[0].estimate.point_estimate + 3 * rows[0].estimate.standard_error >=
          rows[1].estimate.point_estimate - 3 * rows[1].estimate.standard_error);

    std::vector<SweepRow> zeros =
        sweep_agents(EnsembleSpec{0, 0.0, 0.0}, std::nullopt, {3, 5, 7}, 100, 1);
    for (const auto& row : zeros) CHECK(row.estimate.point_estimate == 0.0);
}

TEST_CASE("correlation flattens the gains from more agents") {
    std::vector<SweepRow> indep =
        sweep_agents(EnsembleSpec{0, 0.4, 0.0}, std::nullopt, {3, 5, 7}, 100'000, 11);
    std::vector<SweepRow> corr =
        sweep_agents(EnsembleSpec{0, 0.4, 0.8}, std::nullopt, {3, 5, 7}, 100'000, 11);
    const double gain_indep = indep[0].estimate.point_estimate -
                              indep[2].estimate.point_estimate;
    const double gain_corr = corr[0].estimate.point_estimate -
                             corr[2].estimate.point_estimate;
    CHECK(gain_corr < gain_indep);
}

TEST_CASE("sweep CSV carries the documented header and blanks") {
    std::vector<SweepRow> rows =
        sweep_agents(EnsembleSpec{0, 0.3, 0.5}, std::nullopt, {3}, 1000, 8);
    SimConfig adv = cfg(15, 0.2, 0.0, 1000, 8);
    adv.adversarial = AdversarialSpec{0.45, 0.2};
    rows.push_back(make_sweep_row(adv, 1));

    std::ostringstream out;
    write_sweep_csv(out, rows);
    std::istringstream in(out.str());
    std::string header, row_corr, row_adv;
    std::getline(in, header);
    std::getline(in, row_corr);
    std::getline(in, row_adv);
    CHECK(header == "n_agents,p,rho,alpha,p_c,trials,estimate,std_err,exact,hoeffding,chebyshev");
    // rho=0.5 row: exact and hoeffding blank (they require rho = 0), chebyshev present
    CHECK(row_corr.substr(0, 2) == "3,");
    CHECK(row_corr.find(",,") != std::string::npos);
    // adversarial row records the realized floor fraction 6/15 = 0.4
    CHECK(row_adv.find("0.4,0.2,") != std::string::npos);
    CHECK(rows[1].estimate.point_estimate > 0.0);
}

TEST_CASE("config validation") {
    SimConfig bad = cfg(3, 0.3, 0.0, 0, 1);
    CHECK_THROWS_AS(estimate_majority_error(bad), std::invalid_argument);
    SimConfig bad2 = cfg(0, 0.3, 0.0, 10, 1);
    CHECK_THROWS_AS(estimate_majority_error(bad2), std::invalid_argument);
}
