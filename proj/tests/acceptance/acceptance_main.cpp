// Acceptance suite: exercises the full contract end to end and prints one
// pass/fail line per criterion. Returns nonzero when any criterion fails.
//
// Usage: acceptance [--cli PATH] [--keep]
//   --cli PATH   voterag executable, needed for the process-level
//                determinism criterion
//   --keep       leave the scratch directory behind for inspection

#include <voterag/config.hpp>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace voterag;
using Clock = std::chrono::steady_clock;

namespace {

struct Checker {
    int failures = 0;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            ++failures;
            detail << "    violated: " << what << "\n";
        }
    }
};

int g_failed_criteria = 0;

void run_criterion(int number, const std::string& name,
                   const std::function<void(Checker&)>& body) {
    Checker checker;
    const auto started = Clock::now();
    try {
        body(checker);
    } catch (const std::exception& e) {
        checker.require(false, std::string("unexpected exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - started).count();
    const bool pass = checker.failures == 0;
    if (!pass) ++g_failed_criteria;
    std::printf("%s  criterion %d: %s (%.2fs)\n", pass ? "PASS" : "FAIL", number,
                name.c_str(), seconds);
    if (!pass) std::fputs(checker.detail.str().c_str(), stdout);
    std::fflush(stdout);
}

// Independent oracle: direct enumeration of all 2^N outcome vectors.
long double enumerate_majority_error(int n, long double p) {
    const int m = (n + 1) / 2;
    long double total = 0.0L;
    for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
        const int errors = __builtin_popcountll(mask);
        if (errors < m) continue;
        total += std::pow(p, errors) * std::pow(1.0L - p, n - errors);
    }
    return total;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// ---------------------------------------------------------------------------

void criterion_exact_oracle(Checker& c) {
    const auto started = Clock::now();
    for (int n = 1; n <= 12; ++n) {
        for (int i = 1; i <= 9; ++i) {
            const double p = 0.1 * i;
            const double expected = static_cast<double>(enumerate_majority_error(n, p));
            const double got = exact_majority_error({n, p, 0.0});
            c.require(std::fabs(got - expected) <= 1e-12,
                      "exact vs enumeration at N=" + std::to_string(n) +
                          " p=" + std::to_string(p) + ": |" + std::to_string(got) + " - " +
                          std::to_string(expected) + "| > 1e-12");
        }
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - started).count();
    c.require(seconds < 5.0, "runtime " + std::to_string(seconds) + "s exceeds 5s");
}

void criterion_hoeffding_dominance(Checker& c) {
    for (int n = 1; n <= 15; n += 2) {
        for (int i = 1; i <= 9; ++i) {
            const double p = 0.05 * i;
            const double exact = exact_majority_error({n, p, 0.0});
            const double bound = hoeffding_bound({n, p, 0.0});
            c.require(bound >= exact, "hoeffding < exact at N=" + std::to_string(n) +
                                          " p=" + std::to_string(p));
        }
    }
}

void criterion_chebyshev_containment(Checker& c) {
    const auto started = Clock::now();
    for (double rho : {0.0, 0.25, 0.5}) {
        for (int n : {1, 3, 5, 7, 9}) {
            for (double p : {0.1, 0.2, 0.3, 0.4}) {
                SimConfig config;
                config.ensemble = EnsembleSpec{n, p, rho};
                config.trials = 100000;
                config.seed = 90210;
                SimEstimate est = estimate_majority_error(config, 2);
                const double bound = chebyshev_correlated_bound(config.ensemble);
                c.require(est.point_estimate <= bound + 3.0 * est.standard_error,
                          "estimate above chebyshev bound at N=" + std::to_string(n) +
                              " p=" + std::to_string(p) + " rho=" + std::to_string(rho));
            }
        }
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - started).count();
    c.require(seconds < 60.0, "runtime " + std::to_string(seconds) + "s exceeds 60s");
}

void criterion_two_stage(Checker& c) {
    const std::pair<int, double> stages[] = {{3, 0.3}, {5, 0.2}, {7, 0.1}};
    for (const auto& [nr, pr] : stages) {
        for (const auto& [ng, pg] : stages) {
            SimConfig retrieval;
            retrieval.ensemble = EnsembleSpec{nr, pr, 0.0};
            retrieval.trials = 100000;
            retrieval.seed = 1848;
            SimConfig generation;
            generation.ensemble = EnsembleSpec{ng, pg, 0.0};
            generation.trials = retrieval.trials;
            generation.seed = 1849;
            SimEstimate est = estimate_two_stage_failure(retrieval, generation, 2);

            const double heuristic =
                two_stage_bound({retrieval.ensemble, generation.ensemble});
            c.require(est.point_estimate <= heuristic + 3.0 * est.standard_error,
                      "two-stage estimate above heuristic bound at Nr=" +
                          std::to_string(nr) + " Ng=" + std::to_string(ng));

            const double er = static_cast<double>(enumerate_majority_error(nr, pr));
            const double eg = static_cast<double>(enumerate_majority_error(ng, pg));
            const double oracle = 1.0 - (1.0 - er) * (1.0 - eg);
            c.require(std::fabs(est.point_estimate - oracle) <= 3.0 * est.standard_error,
                      "two-stage estimate off the independence oracle at Nr=" +
                          std::to_string(nr) + " Ng=" + std::to_string(ng) + ": " +
                          std::to_string(est.point_estimate) + " vs " +
                          std::to_string(oracle));
        }
    }
}

void criterion_adversarial_threshold(Checker& c) {
    const double threshold = adversarial_threshold(0.2);
    c.require(std::fabs(threshold - 0.375) < 1e-12, "derived threshold is not 0.375");

    auto accuracy_at = [](double alpha) {
        SimConfig config;
        config.ensemble = EnsembleSpec{15, 0.2, 0.0};
        config.adversarial = AdversarialSpec{alpha, 0.2};
        config.trials = 100000;
        config.seed = 5150;
        return 1.0 - estimate_majority_error(config, 2).point_estimate;
    };
    const double below = accuracy_at(0.30);
    const double above = accuracy_at(0.45);
    c.require(below > 0.5, "accuracy at alpha=0.30 is " + std::to_string(below) +
                               ", expected > 0.5");
    c.require(above < 0.5, "accuracy at alpha=0.45 is " + std::to_string(above) +
                               ", expected < 0.5");
}

void script_world(ScriptedAgent& agent, ScriptedRetriever& retriever, int n,
                  const std::string& qid) {
    for (int i = 0; i < n; ++i) {
        agent.set_entry(AgentStage::query_generation, qid, i, "probe " + std::to_string(i));
        agent.set_entry(AgentStage::answer_generation, qid, i, i % 2 ? "no" : "yes");
        retriever.add("probe " + std::to_string(i),
                      {{"d" + std::to_string(i), "evidence", 1.0 - 0.01 * i}});
    }
}

void criterion_call_budget(Checker& c) {
    const Question question{"q1", "does the budget hold?", {"yes"}};
    for (int n : {1, 3, 5, 7}) {
        ScriptedAgent agent;
        ScriptedRetriever retriever;
        script_world(agent, retriever, n, "q1");
        PipelineConfig config;
        config.n_agents = n;
        RunReport report = run_vote_rag(question, config, {&agent, &retriever});
        c.require(report.error.empty(), "vote run failed at N=" + std::to_string(n));
        c.require(report.llm_calls == 2 * n,
                  "llm_calls=" + std::to_string(report.llm_calls) + " at N=" +
                      std::to_string(n) + ", expected " + std::to_string(2 * n));
        c.require(report.retriever_calls ==
                      static_cast<int>(report.query_pool.queries.size()),
                  "retriever_calls != |query pool| at N=" + std::to_string(n));
    }

    ScriptedAgent agent;
    ScriptedRetriever retriever;
    agent.set_default(AgentStage::answer_generation, "yes");
    PipelineConfig config;
    config.mode = PipelineMode::naive_rag;
    RunReport naive = run_naive_rag(question, config, {&agent, &retriever});
    c.require(naive.error.empty(), "naive run failed");
    c.require(naive.llm_calls == 1, "naive llm_calls != 1");
    c.require(naive.retriever_calls == 1, "naive retriever_calls != 1");
}

void criterion_scaling_trend(Checker& c) {
    // expected EM = 1 - exact_majority_error(N, 0.4), frozen from the
    // enumeration oracle
    const double expected[] = {0.648, 0.68256, 0.710208};
    const int agent_counts[] = {3, 5, 7};
    const int n_questions = 10000;

    std::vector<EvalExample> dataset;
    dataset.reserve(n_questions);
    for (int i = 0; i < n_questions; ++i) {
        const std::string id = "q" + std::to_string(i);
        dataset.push_back(
            {id, "synthetic question " + std::to_string(i), {"gold " + id}, TaskKind::open_qa});
    }

    StochasticAgentModel model;
    model.accuracy = 0.6;
    model.seed = 361;
    model.gold = [](const std::string& qid) { return "gold " + qid; };
    StochasticAgent agent(model);
    NullRetriever retriever;

    double previous_em = 0.0;
    for (int idx = 0; idx < 3; ++idx) {
        PipelineConfig config;
        config.n_agents = agent_counts[idx];
        std::vector<PredictedAnswer> predictions;
        predictions.reserve(dataset.size());
        for (const EvalExample& ex : dataset) {
            const Question question{ex.id, ex.question, ex.gold_answers};
            predictions.push_back(
                to_prediction(run_vote_rag(question, config, {&agent, &retriever})));
        }
        MetricReport metrics = evaluate_run(predictions, dataset);
        const double sigma = std::sqrt(expected[idx] * (1.0 - expected[idx]) / n_questions);
        c.require(std::fabs(metrics.em - expected[idx]) <= 3.0 * sigma,
                  "EM at N=" + std::to_string(agent_counts[idx]) + " is " +
                      std::to_string(metrics.em) + ", expected " +
                      std::to_string(expected[idx]) + " within " + std::to_string(3 * sigma));
        c.require(metrics.em > previous_em,
                  "EM not increasing at N=" + std::to_string(agent_counts[idx]));
        previous_em = metrics.em;
    }
}

void criterion_voting_invariants(Checker& c) {
    SplitMix64 rng(1847);
    const char* labels[] = {"alpha", "beta", "gamma", "delta", "epsilon"};

    // majority dominance, 10^4 randomized candidate sets with a planted
    // absolute-majority cluster
    for (int iter = 0; iter < 10000; ++iter) {
        const int n = 1 + static_cast<int>(rng.next_u64() % 11);
        const int need = n / 2 + 1;
        std::vector<std::string> raw(need, "planted winner");
        while (static_cast<int>(raw.size()) < n)
            raw.push_back(labels[rng.next_u64() % 5]);
        for (int i = n - 1; i > 0; --i)
            std::swap(raw[i], raw[rng.next_u64() % (i + 1)]);
        std::vector<AnswerCandidate> candidates;
        for (int i = 0; i < n; ++i) candidates.push_back(make_answer_candidate(i, raw[i]));
        for (TiebreakRule rule : {TiebreakRule::first_by_agent_index, TiebreakRule::verifier}) {
            VoteResult vote = majority_vote(candidates, rule,
                                            [](const std::vector<std::string>& tied) {
                                                return tied.back();
                                            });
            if (vote.winner != "planted winner" || vote.tie) {
                c.require(false, "dominance violated at iter " + std::to_string(iter));
                return;
            }
        }
    }

    // tie determinism + permutation stability, 10^4 random sets
    for (int iter = 0; iter < 10000; ++iter) {
        const int n = 1 + static_cast<int>(rng.next_u64() % 9);
        std::vector<AnswerCandidate> candidates;
        for (int i = 0; i < n; ++i)
            candidates.push_back(make_answer_candidate(i, labels[rng.next_u64() % 5]));
        VoteResult v1 = majority_vote(candidates, TiebreakRule::first_by_agent_index);
        VoteResult v2 = majority_vote(candidates, TiebreakRule::first_by_agent_index);
        if (v1.winner != v2.winner || v1.tie != v2.tie) {
            c.require(false, "tie resolution not deterministic at iter " +
                                 std::to_string(iter));
            return;
        }
        std::rotate(candidates.begin(), candidates.begin() + rng.next_u64() % n,
                    candidates.end());
        VoteResult v3 = majority_vote(candidates, TiebreakRule::first_by_agent_index);
        if (!v1.tie && normalize_answer(v3.winner) != normalize_answer(v1.winner)) {
            c.require(false, "winner changed under permutation at iter " +
                                 std::to_string(iter));
            return;
        }
    }

    // context symmetry through the real pipeline
    for (int iter = 0; iter < 300; ++iter) {
        const int n = 2 + static_cast<int>(rng.next_u64() % 6);
        ScriptedAgent agent;
        ScriptedRetriever retriever;
        script_world(agent, retriever, n, "q1");
        PipelineConfig config;
        config.n_agents = n;
        config.jobs = 1 + static_cast<int>(rng.next_u64() % 3);
        const Question question{"q1", "context symmetry?", {"yes"}};
        RunReport report = run_vote_rag(question, config, {&agent, &retriever});
        if (!report.error.empty()) {
            c.require(false, "pipeline failed during symmetry check");
            return;
        }
        auto calls = agent.recorded(AgentStage::answer_generation);
        for (const AgentRequest& call : calls) {
            if (call.context != calls.front().context || call.context.empty()) {
                c.require(false, "response agents saw different contexts at iter " +
                                     std::to_string(iter));
                return;
            }
        }
    }

    // normalization idempotence over random byte strings
    const std::string alphabet = "abcDEF 012.,!?'\"-\xE2\x80\x94\xE2\x80\x9C the a an";
    for (int iter = 0; iter < 10000; ++iter) {
        std::string s;
        const int len = static_cast<int>(rng.next_u64() % 48);
        for (int j = 0; j < len; ++j) s += alphabet[rng.next_u64() % alphabet.size()];
        const std::string once = normalize_answer(s);
        if (normalize_answer(once) != once) {
            c.require(false, "normalize not idempotent on: " + s);
            return;
        }
    }
}

void criterion_process_determinism(Checker& c, const std::string& cli, const fs::path& work) {
    if (cli.empty()) {
        c.require(false, "no --cli path given");
        return;
    }

    write_file(work / "config.json", R"({
  "pipeline": {"mode": "vote_rag", "n_agents": 3, "top_k": 3, "seed": 7},
  "backends": {
    "agent": {"kind": "scripted_mock", "script": ")" + (work / "script.json").string() + R"("},
    "retriever": {"kind": "memory_lexical", "corpus": ")" + (work / "corpus.jsonl").string() +
                                                R"("}
  },
  "eval": {"dataset": ")" + (work / "dataset.jsonl").string() + R"("},
  "sim": {"trials": 20000, "seed": 42,
          "grid": {"n_agents": [3, 5], "p": [0.2, 0.4], "rho": [0.0, 0.5],
                   "alpha": [0.45], "p_c": [0.2]}}
})");
    write_file(work / "dataset.jsonl",
               R"({"id":"q1","question":"What is the capital of France?","answers":["Paris"]})"
               "\n"
               R"({"id":"q2","question":"Is water wet?","answers":["yes"],"task":"boolean"})"
               "\n"
               R"({"id":"q3","question":"Largest planet?","answers":["Jupiter"]})"
               "\n");
    write_file(work / "corpus.jsonl",
               R"({"doc_id":"d1","text":"Paris is the capital of France"})"
               "\n"
               R"({"doc_id":"d2","text":"Jupiter is the largest planet"})"
               "\n"
               R"({"doc_id":"d3","text":"Water makes things wet"})"
               "\n");
    nlohmann::json script = {
        {"query_generation", {{"default", "capital planet water"}}},
        {"answer_generation", {{"default", "consensus answer"}}},
    };
    write_file(work / "script.json", script.dump(2));

    auto invoke = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    const std::string base = "--config " + (work / "config.json").string();

    c.require(invoke("simulate " + base + " --out " + (work / "s1").string()) == 0,
              "simulate run 1 failed");
    c.require(invoke("simulate " + base + " --out " + (work / "s2").string()) == 0,
              "simulate run 2 failed");
    c.require(invoke("simulate " + base + " --out " + (work / "s4").string() + " --jobs 4") == 0,
              "simulate with 4 workers failed");
    for (const char* file : {"sweep.csv", "summary.txt", "manifest.json"}) {
        c.require(read_file(work / "s1" / file) == read_file(work / "s2" / file),
                  std::string(file) + " differs across identical simulate invocations");
        c.require(read_file(work / "s1" / file) == read_file(work / "s4" / file),
                  std::string(file) + " differs between 1 and 4 workers");
    }
    c.require(!read_file(work / "s1" / "sweep.csv").empty(), "sweep.csv is empty");

    c.require(invoke("run " + base + " --out " + (work / "r1").string()) == 0,
              "run invocation 1 failed");
    c.require(invoke("run " + base + " --out " + (work / "r2").string()) == 0,
              "run invocation 2 failed");
    c.require(invoke("run " + base + " --out " + (work / "r3").string() + " --jobs 3") == 0,
              "run with 3 workers failed");
    for (const char* file : {"reports.jsonl", "manifest.json"}) {
        c.require(read_file(work / "r1" / file) == read_file(work / "r2" / file),
                  std::string(file) + " differs across identical run invocations");
        c.require(read_file(work / "r1" / file) == read_file(work / "r3" / file),
                  std::string(file) + " differs between 1 and 3 workers");
    }
    c.require(!read_file(work / "r1" / "reports.jsonl").empty(), "reports.jsonl is empty");

    // eval closes the loop on the reports the run produced
    c.require(invoke("eval " + base + " --reports " + (work / "r1" / "reports.jsonl").string() +
                     " --out " + (work / "e1").string()) == 0,
              "eval failed on run output");
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    bool keep = false;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--cli" && i + 1 < argc)
            cli = argv[++i];
        else if (arg == "--keep")
            keep = true;
    }

    const fs::path work =
        fs::temp_directory_path() / ("voterag-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(work);
    fs::create_directories(work);

    run_criterion(1, "exact majority error matches 2^N enumeration (N<=12, 1e-12)",
                  criterion_exact_oracle);
    run_criterion(2, "hoeffding bound dominates the exact error on the full grid",
                  criterion_hoeffding_dominance);
    run_criterion(3, "monte carlo estimates respect the correlated chebyshev bound",
                  criterion_chebyshev_containment);
    run_criterion(4, "two-stage simulation matches bound and independence oracle",
                  criterion_two_stage);
    run_criterion(5, "adversarial fractions bracket the 0.375 threshold at N=15",
                  criterion_adversarial_threshold);
    run_criterion(6, "call budget: 2N llm calls per vote run, 1 for naive",
                  criterion_call_budget);
    run_criterion(7, "EM scaling trend over N in {3,5,7} matches the binomial oracle",
                  criterion_scaling_trend);
    run_criterion(8, "voting invariants hold over randomized candidate sets",
                  criterion_voting_invariants);
    run_criterion(9, "seeded CLI runs are byte-identical across invocations and workers",
                  [&](Checker& c) { criterion_process_determinism(c, cli, work); });

    if (!keep) {
        std::error_code ec;
        fs::remove_all(work, ec);
    }

    if (g_failed_criteria == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d acceptance criteria failed\n", g_failed_criteria);
    return 1;
}
