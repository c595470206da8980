#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace voterag {

enum class AgentStage { query_generation, answer_generation, tie_verification };

inline const char* to_string(AgentStage stage) {
    switch (stage) {
        case AgentStage::query_generation: return "query_generation";
        case AgentStage::answer_generation: return "answer_generation";
        case AgentStage::tie_verification: return "tie_verification";
    }
    return "unknown";
}

// One agent call. The context is the rendered document pool; the pipeline
// guarantees it is byte-identical across agents within a stage. Diversity
// comes only from agent_index and sampling_seed.
struct AgentRequest {
    AgentStage stage = AgentStage::query_generation;
    std::string question_id;
    std::string question_text;
    std::string context;
    int agent_index = 0;
    std::uint64_t sampling_seed = 0;
};

class BackendError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class MissingScriptEntry : public BackendError {
    using BackendError::BackendError;
};

// transport-level failure (could not reach or finish talking to the peer)
class TransportError : public BackendError {
    using BackendError::BackendError;
};

class TimeoutError : public TransportError {
    using TransportError::TransportError;
};

// the peer answered, but outside the contract
class HttpStatusError : public BackendError {
  public:
    HttpStatusError(int status, const std::string& what)
        : BackendError(what), status_(status) {}
    int status() const { return status_; }

  private:
    int status_;
};

class MalformedResponse : public BackendError {
    using BackendError::BackendError;
};

class EmptyIndexError : public BackendError {
    using BackendError::BackendError;
};

class RetrieverUnavailable : public BackendError {
    using BackendError::BackendError;
};

class AgentBackend {
  public:
    virtual ~AgentBackend() = default;
    virtual std::string complete(const AgentRequest& request) = 0;
    // backends that cannot take concurrent calls are serialized by the pipeline
    virtual bool supports_concurrent_calls() const { return false; }
};

struct RetrievedDoc {
    std::string doc_id;
    std::string text;
    double score = 0.0;
};

class RetrieverBackend {
  public:
    virtual ~RetrieverBackend() = default;
    virtual std::vector<RetrievedDoc> search(const std::string& query, int top_k) = 0;
    virtual bool supports_concurrent_calls() const { return false; }
};

}  // namespace voterag
