#pragma once

#include <voterag/backends.hpp>
#include <voterag/rng.hpp>

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace voterag {

// Deterministic test double: answers come from a script keyed by
// (stage, question id, agent index), with an optional per-stage default.
// Every received request is recorded for context-symmetry assertions.
class ScriptedAgent : public AgentBackend {
  public:
    void set_entry(AgentStage stage, const std::string& question_id, int agent_index,
                   std::string text) {
        std::lock_guard lock(mutex_);
        entries_[key(stage, question_id, agent_index)] = std::move(text);
    }

    void set_default(AgentStage stage, std::string text) {
        std::lock_guard lock(mutex_);
        defaults_[static_cast<int>(stage)] = std::move(text);
    }

    std::string complete(const AgentRequest& request) override {
        std::lock_guard lock(mutex_);
        calls_.push_back(request);
        auto it = entries_.find(key(request.stage, request.question_id, request.agent_index));
        if (it != entries_.end()) return it->second;
        auto def = defaults_.find(static_cast<int>(request.stage));
        if (def != defaults_.end()) return def->second;
        throw MissingScriptEntry("no script entry for (" +
                                 std::string(to_string(request.stage)) + ", " +
                                 request.question_id + ", agent " +
                                 std::to_string(request.agent_index) + ")");
    }

    bool supports_concurrent_calls() const override { return true; }

    std::vector<AgentRequest> recorded(AgentStage stage) const {
        std::lock_guard lock(mutex_);
        std::vector<AgentRequest> out;
        for (const AgentRequest& r : calls_)
            if (r.stage == stage) out.push_back(r);
        return out;
    }

    std::size_t total_calls() const {
        std::lock_guard lock(mutex_);
        return calls_.size();
    }

  private:
    using Key = std::tuple<int, std::string, int>;
    static Key key(AgentStage stage, const std::string& qid, int idx) {
        return {static_cast<int>(stage), qid, idx};
    }

    mutable std::mutex mutex_;
    std::map<Key, std::string> entries_;
    std::map<int, std::string> defaults_;
    std::vector<AgentRequest> calls_;
};

// Synthetic Bernoulli answer agent for end-to-end trend experiments. For each
// question it returns the gold answer with probability `accuracy`, otherwise a
// distractor. All wrong agents of one question agree on the same distractor
// (picked per question from the pool), so a vote over the produced strings
// behaves exactly like the binary error model the bounds describe.
struct StochasticAgentModel {
    double accuracy = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::string> distractors;  // defaulted to a 128-entry pool
    std::function<std::string(const std::string& question_id)> gold;
};

class StochasticAgent : public AgentBackend {
  public:
    explicit StochasticAgent(StochasticAgentModel model) : model_(std::move(model)) {
        if (!(model_.accuracy >= 0.0 && model_.accuracy <= 1.0))
            throw std::invalid_argument("StochasticAgent: accuracy must lie in [0,1]");
        if (!model_.gold)
            throw std::invalid_argument("StochasticAgent: gold lookup is required");
        if (model_.distractors.empty()) {
            if (model_.accuracy < 1.0) {
                model_.distractors.reserve(kDefaultPoolSize);
                for (int i = 0; i < kDefaultPoolSize; ++i)
                    model_.distractors.push_back("decoy answer " + std::to_string(i));
            } else {
                model_.distractors.push_back("decoy answer 0");
            }
        }
    }

    std::string complete(const AgentRequest& request) override {
        if (request.stage == AgentStage::query_generation)
            return request.question_text;
        const std::uint64_t qhash = fnv1a64(request.question_id);
        SplitMix64 per_agent =
            make_stream(model_.seed ^ qhash, kAgentDomain, request.agent_index);
        if (per_agent.next_double() < model_.accuracy)
            return model_.gold(request.question_id);
        SplitMix64 per_question = make_stream(model_.seed ^ qhash, kDistractorDomain);
        return model_.distractors[per_question.next_u64() % model_.distractors.size()];
    }

    bool supports_concurrent_calls() const override { return true; }

  private:
    static constexpr int kDefaultPoolSize = 128;
    static constexpr std::uint64_t kAgentDomain = 0x73746f2d6167656eULL;
    static constexpr std::uint64_t kDistractorDomain = 0x73746f2d64697374ULL;

    StochasticAgentModel model_;
};

// Fixture retriever: fixed result lists per query text, empty otherwise.
class ScriptedRetriever : public RetrieverBackend {
  public:
    void add(const std::string& query, std::vector<RetrievedDoc> docs) {
        results_[query] = std::move(docs);
    }

    std::vector<RetrievedDoc> search(const std::string& query, int top_k) override {
        auto it = results_.find(query);
        if (it == results_.end()) return {};
        std::vector<RetrievedDoc> out = it->second;
        if (static_cast<int>(out.size()) > top_k) out.resize(top_k);
        return out;
    }

    bool supports_concurrent_calls() const override { return true; }

  private:
    std::map<std::string, std::vector<RetrievedDoc>> results_;
};

}  // namespace voterag
