#pragma once

#include <voterag/backends.hpp>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <utility>

namespace voterag {

// Prompt wording is non-normative; callers may replace any template.
// Placeholders: {question}, {context}, {agent_index}.
struct PromptTemplates {
    std::string query_generation =
        "You are query agent {agent_index} of an ensemble. Read the question and "
        "write the single best search query for finding the answer. Reply with "
        "the query only.\n\nQuestion: {question}";
    std::string answer_generation =
        "You are answer agent {agent_index} of an ensemble. Using only the "
        "evidence below, answer the question as briefly as possible.\n\n"
        "Evidence:\n{context}\n\nQuestion: {question}\n\nAnswer:";
    std::string tie_verification =
        "Several candidate answers received the same number of votes. Choose the "
        "candidate best supported by the evidence and reply with it verbatim.\n\n"
        "Question: {question}\n\n{context}";

    std::string render(const AgentRequest& request) const {
        std::string out;
        switch (request.stage) {
            case AgentStage::query_generation: out = query_generation; break;
            case AgentStage::answer_generation: out = answer_generation; break;
            case AgentStage::tie_verification: out = tie_verification; break;
        }
        replace_all(out, "{question}", request.question_text);
        replace_all(out, "{context}", request.context);
        replace_all(out, "{agent_index}", std::to_string(request.agent_index));
        return out;
    }

  private:
    static void replace_all(std::string& s, std::string_view key, std::string_view value) {
        std::size_t pos = 0;
        while ((pos = s.find(key, pos)) != std::string::npos) {
            s.replace(pos, key.size(), value);
            pos += value.size();
        }
    }
};

struct HttpChatDescriptor {
    std::string endpoint;  // scheme://host:port
    std::string model = "default";
    double temperature = 0.7;
    int timeout_ms = 30000;
    int retries = 2;
    std::string api_key_env = "VOTERAG_API_KEY";  // key itself is never logged
    PromptTemplates prompts;

    void validate() const {
        if (endpoint.empty()) throw std::invalid_argument("http backend: endpoint required");
        if (timeout_ms <= 0) throw std::invalid_argument("http backend: timeout must be > 0");
        if (retries < 0) throw std::invalid_argument("http backend: retries must be >= 0");
    }
};

namespace detail {

inline bool transient_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

inline bool timeout_error(httplib::Error err) {
    return err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
           err == httplib::Error::Write;
}

struct HttpAttempt {
    httplib::Result result;
    int attempts = 0;
};

// POSTs a JSON body, retrying transport failures and transient statuses.
inline HttpAttempt post_with_retries(const std::string& endpoint, const std::string& path,
                                     const std::string& body, int timeout_ms, int retries,
                                     const std::string& bearer_token) {
    HttpAttempt out;
    for (int attempt = 0; attempt <= retries; ++attempt) {
        httplib::Client client(endpoint);
        client.set_connection_timeout(0, timeout_ms * 1000LL);
        client.set_read_timeout(0, timeout_ms * 1000LL);
        client.set_write_timeout(0, timeout_ms * 1000LL);
        if (!bearer_token.empty()) client.set_bearer_token_auth(bearer_token);
        out.result = client.Post(path, body, "application/json");
        ++out.attempts;
        if (out.result && !transient_status(out.result->status)) break;
    }
    return out;
}

}  // namespace detail

// OpenAI-compatible chat-completions client. One logical call per pipeline
// call; transport retries happen inside and are tallied separately.
class HttpChatAgent : public AgentBackend {
  public:
    explicit HttpChatAgent(HttpChatDescriptor desc) : desc_(std::move(desc)) {
        desc_.validate();
        if (const char* key = std::getenv(desc_.api_key_env.c_str())) api_key_ = key;
    }

    std::string complete(const AgentRequest& request) override {
        nlohmann::json body = {
            {"model", desc_.model},
            {"messages",
             {{{"role", "user"}, {"content", desc_.prompts.render(request)}}}},
            {"temperature", desc_.temperature},
            {"seed", request.sampling_seed},
        };
        const auto started = std::chrono::steady_clock::now();
        detail::HttpAttempt attempt = detail::post_with_retries(
            desc_.endpoint, "/v1/chat/completions", body.dump(), desc_.timeout_ms,
            desc_.retries, api_key_);
        calls_.fetch_add(1, std::memory_order_relaxed);
        attempts_.fetch_add(attempt.attempts, std::memory_order_relaxed);
        last_latency_us_.store(std::chrono::duration_cast<std::chrono::microseconds>(
                                   std::chrono::steady_clock::now() - started)
                                   .count(),
                               std::memory_order_relaxed);

        if (!attempt.result) {
            const auto err = attempt.result.error();
            const std::string what = "chat call failed: " + httplib::to_string(err);
            if (detail::timeout_error(err)) throw TimeoutError(what);
            throw TransportError(what);
        }
        if (attempt.result->status < 200 || attempt.result->status >= 300)
            throw HttpStatusError(attempt.result->status,
                                  "chat call returned HTTP " +
                                      std::to_string(attempt.result->status));
        try {
            nlohmann::json reply = nlohmann::json::parse(attempt.result->body);
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw MalformedResponse(std::string("chat response not understood: ") + e.what());
        }
    }

    bool supports_concurrent_calls() const override { return true; }

    std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
    std::uint64_t attempts() const { return attempts_.load(std::memory_order_relaxed); }
    double last_latency_ms() const {
        return static_cast<double>(last_latency_us_.load(std::memory_order_relaxed)) / 1000.0;
    }

  private:
    HttpChatDescriptor desc_;
    std::string api_key_;
    std::atomic<std::uint64_t> calls_{0};
    std::atomic<std::uint64_t> attempts_{0};
    std::atomic<long long> last_latency_us_{0};
};

struct HttpSearchDescriptor {
    std::string endpoint;
    int timeout_ms = 30000;
    int retries = 2;

    void validate() const {
        if (endpoint.empty()) throw std::invalid_argument("http retriever: endpoint required");
        if (timeout_ms <= 0) throw std::invalid_argument("http retriever: timeout must be > 0");
        if (retries < 0) throw std::invalid_argument("http retriever: retries must be >= 0");
    }
};

// Remote retriever speaking POST /search {"query","top_k"} ->
// {"results": [{"doc_id","text","score"}]}.
class HttpSearchRetriever : public RetrieverBackend {
  public:
    explicit HttpSearchRetriever(HttpSearchDescriptor desc) : desc_(std::move(desc)) {
        desc_.validate();
    }

    std::vector<RetrievedDoc> search(const std::string& query, int top_k) override {
        nlohmann::json body = {{"query", query}, {"top_k", top_k}};
        detail::HttpAttempt attempt = detail::post_with_retries(
            desc_.endpoint, "/search", body.dump(), desc_.timeout_ms, desc_.retries, "");
        if (!attempt.result)
            throw RetrieverUnavailable("search call failed: " +
                                       httplib::to_string(attempt.result.error()));
        if (attempt.result->status < 200 || attempt.result->status >= 300)
            throw HttpStatusError(attempt.result->status,
                                  "search call returned HTTP " +
                                      std::to_string(attempt.result->status));
        try {
            nlohmann::json reply = nlohmann::json::parse(attempt.result->body);
            std::vector<RetrievedDoc> docs;
            for (const auto& item : reply.at("results")) {
                docs.push_back({item.at("doc_id").get<std::string>(),
                                item.at("text").get<std::string>(),
                                item.value("score", 0.0)});
            }
            return docs;
        } catch (const nlohmann::json::exception& e) {
            throw MalformedResponse(std::string("search response not understood: ") + e.what());
        }
    }

    bool supports_concurrent_calls() const override { return true; }

  private:
    HttpSearchDescriptor desc_;
};

}  // namespace voterag
