#pragma once

#include <voterag/backends.hpp>
#include <voterag/backends/http.hpp>
#include <voterag/backends/lexical.hpp>
#include <voterag/backends/mock.hpp>
#include <voterag/ensemble_sim.hpp>
#include <voterag/evalkit.hpp>
#include <voterag/pipeline.hpp>

#include <json.hpp>

#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace voterag {

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

// Silent config typos corrupt experiments; every object is checked against
// its full key list.
inline void require_keys(const nlohmann::json& obj, const std::string& section,
                         std::initializer_list<const char*> allowed) {
    if (!obj.is_object())
        throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
    }
}

template <typename T>
void read_into(const nlohmann::json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline std::string read_text_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string(what) + ": cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace detail

// Grid of parameter values; rows are cartesian products (see the CLI docs).
struct GridSpec {
    std::vector<int> n_agents = {1, 3, 5, 7, 9};
    std::vector<double> p = {0.1, 0.2, 0.3, 0.4};
    std::vector<double> rho = {0.0};
    std::vector<double> alpha;  // adversarial rows only when nonempty
    std::vector<double> p_c;
};

struct SimSection {
    GridSpec grid;
    std::uint64_t trials = 100000;
    std::uint64_t seed = 42;
};

struct EvalSection {
    std::string dataset;
};

struct OutputSection {
    std::string directory = "out";
};

struct AgentDescriptor {
    std::string kind = "scripted_mock";  // scripted_mock | stochastic_mock | http_chat
    // scripted_mock
    std::string script_path;
    // stochastic_mock
    double accuracy = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::string> distractors;
    // http_chat
    HttpChatDescriptor http;
};

struct RetrieverDescriptor {
    std::string kind = "memory_lexical";  // memory_lexical | http_search | none
    std::string corpus_path;
    HttpSearchDescriptor http;
};

struct RunConfig {
    PipelineConfig pipeline;
    AgentDescriptor agent;
    RetrieverDescriptor retriever;
    EvalSection eval;
    SimSection sim;
    OutputSection output;
};

namespace detail {

inline void parse_pipeline(const nlohmann::json& obj, PipelineConfig& out) {
    require_keys(obj, "pipeline",
                 {"mode", "n_agents", "top_k", "max_docs", "tiebreak", "seed", "jobs"});
    if (obj.contains("mode")) out.mode = mode_from_string(obj.at("mode").get<std::string>());
    read_into(obj, "n_agents", out.n_agents);
    read_into(obj, "top_k", out.top_k);
    read_into(obj, "max_docs", out.max_docs);
    if (obj.contains("tiebreak"))
        out.tiebreak = tiebreak_from_string(obj.at("tiebreak").get<std::string>());
    read_into(obj, "seed", out.seed);
    read_into(obj, "jobs", out.jobs);
    out.validate();
}

inline void parse_grid(const nlohmann::json& obj, GridSpec& out) {
    require_keys(obj, "sim.grid", {"n_agents", "p", "rho", "alpha", "p_c"});
    read_into(obj, "n_agents", out.n_agents);
    read_into(obj, "p", out.p);
    read_into(obj, "rho", out.rho);
    read_into(obj, "alpha", out.alpha);
    read_into(obj, "p_c", out.p_c);
}

inline void parse_sim(const nlohmann::json& obj, SimSection& out) {
    require_keys(obj, "sim", {"grid", "trials", "seed"});
    if (obj.contains("grid")) parse_grid(obj.at("grid"), out.grid);
    read_into(obj, "trials", out.trials);
    read_into(obj, "seed", out.seed);
    if (out.trials < 1) throw ConfigError("sim.trials must be >= 1");
}

inline void parse_prompts(const nlohmann::json& obj, PromptTemplates& out) {
    require_keys(obj, "backends.agent.prompts",
                 {"query_generation", "answer_generation", "tie_verification"});
    if (obj.contains("query_generation"))
        out.query_generation =
            read_text_file(obj.at("query_generation").get<std::string>(), "prompt template");
    if (obj.contains("answer_generation"))
        out.answer_generation =
            read_text_file(obj.at("answer_generation").get<std::string>(), "prompt template");
    if (obj.contains("tie_verification"))
        out.tie_verification =
            read_text_file(obj.at("tie_verification").get<std::string>(), "prompt template");
}

inline void parse_agent(const nlohmann::json& obj, AgentDescriptor& out) {
    require_keys(obj, "backends.agent",
                 {"kind", "script", "accuracy", "seed", "distractors", "endpoint", "model",
                  "temperature", "timeout_ms", "retries", "api_key_env", "prompts"});
    read_into(obj, "kind", out.kind);
    read_into(obj, "script", out.script_path);
    read_into(obj, "accuracy", out.accuracy);
    read_into(obj, "seed", out.seed);
    read_into(obj, "distractors", out.distractors);
    read_into(obj, "endpoint", out.http.endpoint);
    read_into(obj, "model", out.http.model);
    read_into(obj, "temperature", out.http.temperature);
    read_into(obj, "timeout_ms", out.http.timeout_ms);
    read_into(obj, "retries", out.http.retries);
    read_into(obj, "api_key_env", out.http.api_key_env);
    if (obj.contains("prompts")) parse_prompts(obj.at("prompts"), out.http.prompts);
    if (out.kind != "scripted_mock" && out.kind != "stochastic_mock" &&
        out.kind != "http_chat")
        throw ConfigError("unknown agent backend kind '" + out.kind + "'");
    if (!(out.accuracy >= 0.0 && out.accuracy <= 1.0))
        throw ConfigError("agent accuracy must lie in [0,1]");
}

inline void parse_retriever(const nlohmann::json& obj, RetrieverDescriptor& out) {
    require_keys(obj, "backends.retriever",
                 {"kind", "corpus", "endpoint", "timeout_ms", "retries"});
    read_into(obj, "kind", out.kind);
    read_into(obj, "corpus", out.corpus_path);
    read_into(obj, "endpoint", out.http.endpoint);
    read_into(obj, "timeout_ms", out.http.timeout_ms);
    read_into(obj, "retries", out.http.retries);
    if (out.kind != "memory_lexical" && out.kind != "http_search" && out.kind != "none")
        throw ConfigError("unknown retriever backend kind '" + out.kind + "'");
}

}  // namespace detail

// Parses the JSON-with-comments config document; unknown keys are errors.
inline RunConfig parse_run_config(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    detail::require_keys(doc, "(top level)",
                         {"pipeline", "backends", "eval", "sim", "output"});
    RunConfig config;
    if (doc.contains("pipeline")) detail::parse_pipeline(doc.at("pipeline"), config.pipeline);
    if (doc.contains("backends")) {
        detail::require_keys(doc.at("backends"), "backends", {"agent", "retriever"});
        if (doc.at("backends").contains("agent"))
            detail::parse_agent(doc.at("backends").at("agent"), config.agent);
        if (doc.at("backends").contains("retriever"))
            detail::parse_retriever(doc.at("backends").at("retriever"), config.retriever);
    }
    if (doc.contains("eval")) {
        detail::require_keys(doc.at("eval"), "eval", {"dataset"});
        detail::read_into(doc.at("eval"), "dataset", config.eval.dataset);
    }
    if (doc.contains("sim")) detail::parse_sim(doc.at("sim"), config.sim);
    if (doc.contains("output")) {
        detail::require_keys(doc.at("output"), "output", {"directory"});
        detail::read_into(doc.at("output"), "directory", config.output.directory);
    }
    return config;
}

inline RunConfig load_run_config(const std::string& path) {
    return parse_run_config(detail::read_text_file(path, "config"));
}

// Script document: one object per stage, each with optional "default" and
// "entries" [{question_id, agent_index, text}].
inline std::unique_ptr<ScriptedAgent> scripted_agent_from_json(const nlohmann::json& doc) {
    detail::require_keys(doc, "script",
                         {"query_generation", "answer_generation", "tie_verification"});
    auto agent = std::make_unique<ScriptedAgent>();
    const std::pair<const char*, AgentStage> stages[] = {
        {"query_generation", AgentStage::query_generation},
        {"answer_generation", AgentStage::answer_generation},
        {"tie_verification", AgentStage::tie_verification},
    };
    for (const auto& [name, stage] : stages) {
        if (!doc.contains(name)) continue;
        const nlohmann::json& section = doc.at(name);
        detail::require_keys(section, std::string("script.") + name, {"default", "entries"});
        if (section.contains("default"))
            agent->set_default(stage, section.at("default").get<std::string>());
        if (section.contains("entries")) {
            for (const auto& entry : section.at("entries")) {
                detail::require_keys(entry, std::string("script.") + name + ".entries",
                                     {"question_id", "agent_index", "text"});
                agent->set_entry(stage, entry.at("question_id").get<std::string>(),
                                 entry.at("agent_index").get<int>(),
                                 entry.at("text").get<std::string>());
            }
        }
    }
    return agent;
}

// Empty-result retriever; handy when an experiment only exercises voting.
class NullRetriever : public RetrieverBackend {
  public:
    std::vector<RetrievedDoc> search(const std::string&, int) override { return {}; }
    bool supports_concurrent_calls() const override { return true; }
};

struct BuiltBackends {
    std::unique_ptr<AgentBackend> agent;
    std::unique_ptr<RetrieverBackend> retriever;

    Backends get() const { return Backends{agent.get(), retriever.get()}; }
};

// Instantiates backends from descriptors. The stochastic mock needs the eval
// dataset to look up gold answers.
inline BuiltBackends build_backends(const RunConfig& config,
                                    const std::vector<EvalExample>* dataset) {
    BuiltBackends built;

    if (config.agent.kind == "scripted_mock") {
        if (config.agent.script_path.empty()) {
            built.agent = std::make_unique<ScriptedAgent>();
        } else {
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(
                    detail::read_text_file(config.agent.script_path, "agent script"),
                    nullptr, true, /*ignore_comments=*/true);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(std::string("agent script is not valid JSON: ") + e.what());
            }
            built.agent = scripted_agent_from_json(doc);
        }
    } else if (config.agent.kind == "stochastic_mock") {
        if (!dataset)
            throw ConfigError("stochastic_mock agent requires an eval dataset for gold answers");
        auto gold_by_id = std::make_shared<std::unordered_map<std::string, std::string>>();
        for (const EvalExample& ex : *dataset)
            (*gold_by_id)[ex.id] = ex.gold_answers.front();
        StochasticAgentModel model;
        model.accuracy = config.agent.accuracy;
        model.seed = config.agent.seed;
        model.distractors = config.agent.distractors;
        model.gold = [gold_by_id](const std::string& qid) {
            auto it = gold_by_id->find(qid);
            if (it == gold_by_id->end())
                throw std::invalid_argument("stochastic agent: unknown question id '" + qid +
                                            "'");
            return it->second;
        };
        built.agent = std::make_unique<StochasticAgent>(std::move(model));
    } else if (config.agent.kind == "http_chat") {
        built.agent = std::make_unique<HttpChatAgent>(config.agent.http);
    } else {
        throw ConfigError("unknown agent backend kind '" + config.agent.kind + "'");
    }

    if (config.retriever.kind == "memory_lexical") {
        if (config.retriever.corpus_path.empty())
            throw ConfigError("memory_lexical retriever requires a corpus path");
        std::ifstream in(config.retriever.corpus_path);
        if (!in)
            throw ConfigError("cannot open corpus '" + config.retriever.corpus_path + "'");
        built.retriever = std::make_unique<LexicalRetriever>(LexicalIndex::from_jsonl(in));
    } else if (config.retriever.kind == "http_search") {
        built.retriever = std::make_unique<HttpSearchRetriever>(config.retriever.http);
    } else if (config.retriever.kind == "none") {
        built.retriever = std::make_unique<NullRetriever>();
    } else {
        throw ConfigError("unknown retriever backend kind '" + config.retriever.kind + "'");
    }

    return built;
}

}  // namespace voterag
