#pragma once

#include <voterag/backends.hpp>
#include <voterag/evalkit.hpp>
#include <voterag/rng.hpp>

#include <json.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace voterag {

struct Question {
    std::string id;
    std::string text;
    std::vector<std::string> gold_answers;  // may be empty at inference time

    void validate() const {
        if (id.empty()) throw std::invalid_argument("Question: id must be nonempty");
        if (text.empty()) throw std::invalid_argument("Question '" + id + "': empty text");
    }
};

struct QueryEntry {
    std::string text;
    int agent_id = 0;
};

// Deduplicated union of agent-generated queries, in first-seen agent order.
struct QueryPool {
    std::vector<QueryEntry> queries;
    int original_count = 0;
};

struct PooledDocument {
    std::string doc_id;
    std::string text;
    double best_score = 0.0;
    std::vector<int> source_query_ids;  // indices into QueryPool::queries
};

struct DocumentPool {
    std::vector<PooledDocument> documents;  // score-descending, doc_id tiebreak
    std::size_t cap = 0;
};

struct AnswerCandidate {
    int agent_id = 0;
    std::string raw_text;
    std::string normalized_text;
    std::string cluster_key;
};

// Pluggable answer-equivalence hook; the default clusters on the same
// normalization that backs exact match.
using ClusterKeyFn = std::function<std::string(const std::string&)>;

inline AnswerCandidate make_answer_candidate(int agent_id, std::string raw,
                                             const ClusterKeyFn& cluster = {}) {
    AnswerCandidate c;
    c.agent_id = agent_id;
    c.normalized_text = normalize_answer(raw);
    c.cluster_key = cluster ? cluster(raw) : c.normalized_text;
    c.raw_text = std::move(raw);
    return c;
}

enum class TiebreakRule { first_by_agent_index, verifier };

inline const char* to_string(TiebreakRule rule) {
    return rule == TiebreakRule::verifier ? "verifier" : "first_by_agent_index";
}

inline TiebreakRule tiebreak_from_string(std::string_view s) {
    if (s == "first_by_agent_index") return TiebreakRule::first_by_agent_index;
    if (s == "verifier") return TiebreakRule::verifier;
    throw std::invalid_argument("unknown tiebreak rule: " + std::string(s));
}

struct ClusterTally {
    int count = 0;
    std::string representative;  // raw answer of the lowest-indexed member
    int first_agent_id = 0;
};

struct VoteResult {
    std::string winner;
    std::map<std::string, ClusterTally> tally;
    bool tie = false;
    TiebreakRule tiebreak_rule = TiebreakRule::first_by_agent_index;
};

struct AgentFailure {
    int agent_id = 0;
    std::string stage;
    std::string message;
};

class AllAgentsFailed : public BackendError {
    using BackendError::BackendError;
};

enum class PipelineMode { vote_rag, naive_rag };

inline const char* to_string(PipelineMode mode) {
    return mode == PipelineMode::naive_rag ? "naive_rag" : "vote_rag";
}

inline PipelineMode mode_from_string(std::string_view s) {
    if (s == "vote_rag") return PipelineMode::vote_rag;
    if (s == "naive_rag") return PipelineMode::naive_rag;
    throw std::invalid_argument("unknown pipeline mode: " + std::string(s));
}

struct PipelineConfig {
    PipelineMode mode = PipelineMode::vote_rag;
    int n_agents = 5;
    int top_k = 3;
    int max_docs = 0;  // 0: defaults to 3 * top_k
    TiebreakRule tiebreak = TiebreakRule::first_by_agent_index;
    std::uint64_t seed = 0;
    int jobs = 1;

    int resolved_max_docs() const { return max_docs > 0 ? max_docs : 3 * top_k; }

    void validate() const {
        if (n_agents < 1) throw std::invalid_argument("pipeline: n_agents must be >= 1");
        if (top_k < 1) throw std::invalid_argument("pipeline: top_k must be >= 1");
        if (max_docs < 0) throw std::invalid_argument("pipeline: max_docs must be >= 0");
        if (jobs < 1) throw std::invalid_argument("pipeline: jobs must be >= 1");
    }
};

struct Backends {
    AgentBackend* agent = nullptr;
    RetrieverBackend* retriever = nullptr;

    void validate() const {
        if (!agent || !retriever)
            throw std::invalid_argument("pipeline: agent and retriever backends required");
    }
};

// Per-stage accounting; llm_calls counts attempted calls, failures included.
struct StageTrace {
    int attempted_calls = 0;
    int retriever_calls = 0;
    std::vector<AgentFailure> failures;
};

namespace detail {

inline constexpr std::uint64_t kQueryStageDomain = 0x71756572792d6765ULL;
inline constexpr std::uint64_t kAnswerStageDomain = 0x616e737765722d67ULL;
inline constexpr std::uint64_t kVerifierStageDomain = 0x7665726966792d67ULL;

inline std::uint64_t stage_domain(AgentStage stage) {
    switch (stage) {
        case AgentStage::query_generation: return kQueryStageDomain;
        case AgentStage::answer_generation: return kAnswerStageDomain;
        case AgentStage::tie_verification: return kVerifierStageDomain;
    }
    return kQueryStageDomain;
}

struct AgentCallOutcome {
    std::vector<std::optional<std::string>> outputs;
    std::vector<AgentFailure> failures;  // in agent-index order
};

// Fires n agent calls for one stage. All requests share the identical context
// string; diversity enters only through agent_index and sampling_seed. Calls
// run concurrently when the backend allows it, with slot-per-agent results so
// the outcome is independent of scheduling.
inline AgentCallOutcome run_agent_calls(AgentBackend& backend, AgentStage stage,
                                        const Question& question, const std::string& context,
                                        int n_agents, const PipelineConfig& config) {
    AgentCallOutcome outcome;
    outcome.outputs.resize(n_agents);
    std::vector<std::string> errors(n_agents);

    auto call_one = [&](int i) {
        AgentRequest request;
        request.stage = stage;
        request.question_id = question.id;
        request.question_text = question.text;
        request.context = context;
        request.agent_index = i;
        request.sampling_seed =
            make_stream(config.seed ^ fnv1a64(question.id), stage_domain(stage), i).state;
        try {
            std::string text = backend.complete(request);
            if (text.empty())
                errors[i] = "agent returned empty output";
            else
                outcome.outputs[i] = std::move(text);
        } catch (const std::exception& e) {
            errors[i] = e.what()[0] ? e.what() : "agent call failed";
        }
    };

    const int jobs = std::min(config.jobs, n_agents);
    if (jobs > 1 && backend.supports_concurrent_calls()) {
        std::vector<std::thread> workers;
        workers.reserve(jobs);
        for (int w = 0; w < jobs; ++w) {
            workers.emplace_back([&, w] {
                for (int i = w; i < n_agents; i += jobs) call_one(i);
            });
        }
        for (auto& t : workers) t.join();
    } else {
        for (int i = 0; i < n_agents; ++i) call_one(i);
    }

    for (int i = 0; i < n_agents; ++i)
        if (!outcome.outputs[i])
            outcome.failures.push_back({i, to_string(stage), errors[i]});
    return outcome;
}

}  // namespace detail

// Stage one of the vote pipeline: N independent query agents, union-deduped
// on normalized text. Failed agents shrink the pool; an empty pool aborts.
inline QueryPool generate_queries(const Question& question, int n_agents,
                                  AgentBackend& backend, const PipelineConfig& config,
                                  StageTrace* trace = nullptr) {
    question.validate();
    if (n_agents < 1) throw std::invalid_argument("generate_queries: n_agents must be >= 1");

    detail::AgentCallOutcome calls = detail::run_agent_calls(
        backend, AgentStage::query_generation, question, "", n_agents, config);
    if (trace) {
        trace->attempted_calls += n_agents;
        trace->failures.insert(trace->failures.end(), calls.failures.begin(),
                               calls.failures.end());
    }

    QueryPool pool;
    pool.original_count = n_agents;
    std::set<std::string> seen;
    for (int i = 0; i < n_agents; ++i) {
        if (!calls.outputs[i]) continue;
        if (seen.insert(normalize_answer(*calls.outputs[i])).second)
            pool.queries.push_back({*calls.outputs[i], i});
    }
    if (pool.queries.empty())
        throw AllAgentsFailed("query generation: no agent produced a query for '" +
                              question.id + "'");
    return pool;
}

// Fetches top_k documents per pool query and max-merges them by doc_id.
// Per-query empty results are legal; retriever exceptions abort the question.
inline DocumentPool retrieve_pool(const QueryPool& pool, RetrieverBackend& retriever,
                                  int top_k, int max_docs, StageTrace* trace = nullptr) {
    if (pool.queries.empty())
        throw std::invalid_argument("retrieve_pool: query pool is empty");
    if (top_k < 1) throw std::invalid_argument("retrieve_pool: top_k must be >= 1");
    if (max_docs < 1) throw std::invalid_argument("retrieve_pool: max_docs must be >= 1");

    DocumentPool out;
    out.cap = static_cast<std::size_t>(max_docs);
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t qi = 0; qi < pool.queries.size(); ++qi) {
        std::vector<RetrievedDoc> docs = retriever.search(pool.queries[qi].text, top_k);
        if (trace) ++trace->retriever_calls;
        for (RetrievedDoc& doc : docs) {
            auto [it, inserted] = by_id.try_emplace(doc.doc_id, out.documents.size());
            if (inserted) {
                out.documents.push_back({doc.doc_id, std::move(doc.text), doc.score,
                                         {static_cast<int>(qi)}});
            } else {
                PooledDocument& existing = out.documents[it->second];
                existing.best_score = std::max(existing.best_score, doc.score);
                if (existing.source_query_ids.back() != static_cast<int>(qi))
                    existing.source_query_ids.push_back(static_cast<int>(qi));
            }
        }
    }
    std::sort(out.documents.begin(), out.documents.end(),
              [](const PooledDocument& a, const PooledDocument& b) {
                  if (a.best_score != b.best_score) return a.best_score > b.best_score;
                  return a.doc_id < b.doc_id;
              });
    if (out.documents.size() > out.cap) out.documents.resize(out.cap);
    return out;
}

inline std::string render_context(const DocumentPool& docs) {
    std::string out;
    for (const PooledDocument& doc : docs.documents) {
        out += "[doc ";
        out += doc.doc_id;
        out += "] ";
        out += doc.text;
        out += '\n';
    }
    return out;
}

// Stage two: N answer agents, every one fed the byte-identical rendered pool.
inline std::vector<AnswerCandidate> generate_answers(const Question& question,
                                                     const DocumentPool& docs, int n_agents,
                                                     AgentBackend& backend,
                                                     const PipelineConfig& config,
                                                     StageTrace* trace = nullptr,
                                                     const ClusterKeyFn& cluster = {}) {
    question.validate();
    if (n_agents < 1) throw std::invalid_argument("generate_answers: n_agents must be >= 1");

    const std::string context = render_context(docs);
    detail::AgentCallOutcome calls = detail::run_agent_calls(
        backend, AgentStage::answer_generation, question, context, n_agents, config);
    if (trace) {
        trace->attempted_calls += n_agents;
        trace->failures.insert(trace->failures.end(), calls.failures.begin(),
                               calls.failures.end());
    }

    std::vector<AnswerCandidate> candidates;
    candidates.reserve(n_agents);
    for (int i = 0; i < n_agents; ++i)
        if (calls.outputs[i])
            candidates.push_back(make_answer_candidate(i, std::move(*calls.outputs[i]), cluster));
    if (candidates.empty())
        throw AllAgentsFailed("answer generation: no agent produced an answer for '" +
                              question.id + "'");
    return candidates;
}

using VerifierFn = std::function<std::string(const std::vector<std::string>&)>;

// Majority vote over cluster keys. The winning cluster's representative is
// the raw answer of its lowest-indexed agent, so the winner is stable under
// permutations of the candidate list. Ties go to the lowest agent index, or
// to the verifier hook when that rule is selected.
inline VoteResult majority_vote(const std::vector<AnswerCandidate>& candidates,
                                TiebreakRule rule, const VerifierFn& verifier = {}) {
    if (candidates.empty())
        throw std::invalid_argument("majority_vote: candidates must be nonempty");

    VoteResult result;
    result.tiebreak_rule = rule;
    for (const AnswerCandidate& c : candidates) {
        ClusterTally& cluster = result.tally[c.cluster_key];
        if (cluster.count == 0 || c.agent_id < cluster.first_agent_id) {
            cluster.representative = c.raw_text;
            cluster.first_agent_id = c.agent_id;
        }
        ++cluster.count;
    }

    int max_count = 0;
    for (const auto& [key, cluster] : result.tally)
        max_count = std::max(max_count, cluster.count);

    std::vector<const ClusterTally*> tied;
    for (const auto& [key, cluster] : result.tally)
        if (cluster.count == max_count) tied.push_back(&cluster);
    std::sort(tied.begin(), tied.end(), [](const ClusterTally* a, const ClusterTally* b) {
        return a->first_agent_id < b->first_agent_id;
    });
    result.tie = tied.size() > 1;

    const ClusterTally* winner = tied.front();
    if (result.tie && rule == TiebreakRule::verifier) {
        if (!verifier)
            throw std::invalid_argument("majority_vote: verifier tiebreak needs a hook");
        std::vector<std::string> representatives;
        representatives.reserve(tied.size());
        for (const ClusterTally* c : tied) representatives.push_back(c->representative);
        const std::string pick = verifier(representatives);
        for (const ClusterTally* c : tied) {
            if (c->representative == pick ||
                normalize_answer(c->representative) == normalize_answer(pick)) {
                winner = c;
                break;
            }
        }
        // no match: fall through to the lowest agent index
    }
    result.winner = winner->representative;
    return result;
}

// Condensed per-question trace. wall_time_ms is informational and is left out
// of the serialized form so seeded runs stay byte-identical.
struct RunReport {
    std::string question_id;
    PipelineMode mode = PipelineMode::vote_rag;
    int n_agents = 0;
    QueryPool query_pool;
    std::vector<PooledDocument> documents;  // summaries: text omitted
    std::vector<AnswerCandidate> candidates;
    VoteResult vote;
    std::string final_answer;
    int llm_calls = 0;
    int retriever_calls = 0;
    double wall_time_ms = 0.0;
    std::string error;  // empty means success
    std::vector<AgentFailure> agent_failures;

    bool failed() const { return !error.empty(); }

    std::vector<std::string> document_ids() const {
        std::vector<std::string> out;
        out.reserve(documents.size());
        for (const PooledDocument& d : documents) out.push_back(d.doc_id);
        return out;
    }
};

namespace detail {

inline std::vector<PooledDocument> summarize(const DocumentPool& docs) {
    std::vector<PooledDocument> out;
    out.reserve(docs.documents.size());
    for (const PooledDocument& d : docs.documents)
        out.push_back({d.doc_id, "", d.best_score, d.source_query_ids});
    return out;
}

template <typename Body>
RunReport run_with_report(const Question& question, const PipelineConfig& config,
                          PipelineMode mode, int reported_agents, Body&& body) {
    const auto started = std::chrono::steady_clock::now();
    RunReport report;
    report.question_id = question.id;
    report.mode = mode;
    report.n_agents = reported_agents;
    report.vote.tiebreak_rule = config.tiebreak;
    StageTrace trace;
    try {
        body(report, trace);
    } catch (const std::exception& e) {
        report.error = e.what()[0] ? e.what() : "pipeline failure";
    }
    report.llm_calls = trace.attempted_calls;
    report.retriever_calls = trace.retriever_calls;
    report.agent_failures = trace.failures;
    report.wall_time_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - started)
                              .count();
    return report;
}

}  // namespace detail

// The full two-stage vote pipeline. Successful runs cost exactly 2N llm
// calls (N query + N answer), plus one when the verifier tiebreak fires.
inline RunReport run_vote_rag(const Question& question, const PipelineConfig& config,
                              const Backends& backends, const ClusterKeyFn& cluster = {}) {
    config.validate();
    backends.validate();
    question.validate();
    return detail::run_with_report(
        question, config, PipelineMode::vote_rag, config.n_agents,
        [&](RunReport& report, StageTrace& trace) {
            report.query_pool =
                generate_queries(question, config.n_agents, *backends.agent, config, &trace);
            DocumentPool docs =
                retrieve_pool(report.query_pool, *backends.retriever, config.top_k,
                              config.resolved_max_docs(), &trace);
            report.documents = detail::summarize(docs);
            report.candidates = generate_answers(question, docs, config.n_agents,
                                                 *backends.agent, config, &trace, cluster);

            VerifierFn verifier;
            if (config.tiebreak == TiebreakRule::verifier) {
                verifier = [&](const std::vector<std::string>& tied) {
                    AgentRequest request;
                    request.stage = AgentStage::tie_verification;
                    request.question_id = question.id;
                    request.question_text = question.text;
                    std::string ctx = "Tied candidates:\n";
                    for (const std::string& rep : tied) (ctx += "- ") += rep, ctx += '\n';
                    ctx += "\nEvidence:\n";
                    ctx += render_context(docs);
                    request.context = std::move(ctx);
                    request.agent_index = 0;
                    request.sampling_seed =
                        make_stream(config.seed ^ fnv1a64(question.id),
                                    detail::kVerifierStageDomain, 0)
                            .state;
                    ++trace.attempted_calls;  // the extra call is billed
                    return backends.agent->complete(request);
                };
            }
            report.vote = majority_vote(report.candidates, config.tiebreak, verifier);
            report.final_answer = report.vote.winner;
        });
}

// Standard single-query, single-generation baseline.
inline RunReport run_naive_rag(const Question& question, const PipelineConfig& config,
                               const Backends& backends) {
    config.validate();
    backends.validate();
    question.validate();
    return detail::run_with_report(
        question, config, PipelineMode::naive_rag, 1,
        [&](RunReport& report, StageTrace& trace) {
            report.query_pool.original_count = 1;
            report.query_pool.queries = {{question.text, -1}};  // raw question, no agent
            DocumentPool docs = retrieve_pool(report.query_pool, *backends.retriever,
                                              config.top_k, config.top_k, &trace);
            report.documents = detail::summarize(docs);
            report.candidates =
                generate_answers(question, docs, 1, *backends.agent, config, &trace);
            report.vote = majority_vote(report.candidates, config.tiebreak);
            report.final_answer = report.vote.winner;
        });
}

// ---------------------------------------------------------------------------
// JSON-lines serialization (wall_time_ms intentionally excluded)
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const RunReport& r) {
    nlohmann::json queries = nlohmann::json::array();
    for (const QueryEntry& q : r.query_pool.queries)
        queries.push_back({{"text", q.text}, {"agent_id", q.agent_id}});

    nlohmann::json documents = nlohmann::json::array();
    for (const PooledDocument& d : r.documents)
        documents.push_back({{"doc_id", d.doc_id},
                             {"best_score", d.best_score},
                             {"source_query_ids", d.source_query_ids}});

    nlohmann::json candidates = nlohmann::json::array();
    for (const AnswerCandidate& c : r.candidates)
        candidates.push_back({{"agent_id", c.agent_id},
                              {"raw_text", c.raw_text},
                              {"normalized_text", c.normalized_text},
                              {"cluster_key", c.cluster_key}});

    nlohmann::json tally = nlohmann::json::object();
    for (const auto& [key, cluster] : r.vote.tally)
        tally[key] = {{"count", cluster.count},
                      {"representative", cluster.representative},
                      {"first_agent_id", cluster.first_agent_id}};

    nlohmann::json failures = nlohmann::json::array();
    for (const AgentFailure& f : r.agent_failures)
        failures.push_back({{"agent_id", f.agent_id},
                            {"stage", f.stage},
                            {"message", f.message}});

    return nlohmann::json{
        {"question_id", r.question_id},
        {"mode", to_string(r.mode)},
        {"n_agents", r.n_agents},
        {"query_pool", {{"original_count", r.query_pool.original_count}, {"queries", queries}}},
        {"documents", documents},
        {"candidates", candidates},
        {"vote",
         {{"winner", r.vote.winner},
          {"tie", r.vote.tie},
          {"tiebreak_rule", to_string(r.vote.tiebreak_rule)},
          {"tally", tally}}},
        {"final_answer", r.final_answer},
        {"llm_calls", r.llm_calls},
        {"retriever_calls", r.retriever_calls},
        {"error", r.error},
        {"agent_failures", failures},
    };
}

inline RunReport report_from_json(const nlohmann::json& j) {
    RunReport r;
    r.question_id = j.at("question_id").get<std::string>();
    r.mode = mode_from_string(j.at("mode").get<std::string>());
    r.n_agents = j.at("n_agents").get<int>();
    r.query_pool.original_count = j.at("query_pool").at("original_count").get<int>();
    for (const auto& q : j.at("query_pool").at("queries"))
        r.query_pool.queries.push_back(
            {q.at("text").get<std::string>(), q.at("agent_id").get<int>()});
    for (const auto& d : j.at("documents"))
        r.documents.push_back({d.at("doc_id").get<std::string>(), "",
                               d.at("best_score").get<double>(),
                               d.at("source_query_ids").get<std::vector<int>>()});
    for (const auto& c : j.at("candidates")) {
        AnswerCandidate cand;
        cand.agent_id = c.at("agent_id").get<int>();
        cand.raw_text = c.at("raw_text").get<std::string>();
        cand.normalized_text = c.at("normalized_text").get<std::string>();
        cand.cluster_key = c.at("cluster_key").get<std::string>();
        r.candidates.push_back(std::move(cand));
    }
    const auto& vote = j.at("vote");
    r.vote.winner = vote.at("winner").get<std::string>();
    r.vote.tie = vote.at("tie").get<bool>();
    r.vote.tiebreak_rule = tiebreak_from_string(vote.at("tiebreak_rule").get<std::string>());
    for (const auto& [key, cluster] : vote.at("tally").items())
        r.vote.tally[key] = {cluster.at("count").get<int>(),
                             cluster.at("representative").get<std::string>(),
                             cluster.at("first_agent_id").get<int>()};
    r.final_answer = j.at("final_answer").get<std::string>();
    r.llm_calls = j.at("llm_calls").get<int>();
    r.retriever_calls = j.at("retriever_calls").get<int>();
    r.error = j.at("error").get<std::string>();
    for (const auto& f : j.at("agent_failures"))
        r.agent_failures.push_back({f.at("agent_id").get<int>(),
                                    f.at("stage").get<std::string>(),
                                    f.at("message").get<std::string>()});
    return r;
}

inline PredictedAnswer to_prediction(const RunReport& report) {
    return PredictedAnswer{report.question_id, report.final_answer, report.failed()};
}

}  // namespace voterag
