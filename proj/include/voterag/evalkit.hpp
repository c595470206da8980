#pragma once

#include <json.hpp>

#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace voterag {

// Answer normalization, shared by the EM metric and vote clustering:
//   1. ASCII letters lowercased
//   2. punctuation replaced by a space (ASCII punctuation plus the common
//      Unicode dashes, curly quotes, ellipsis and non-breaking space)
//   3. article tokens "a", "an", "the" removed
//   4. whitespace collapsed to single spaces, trimmed
// Other non-ASCII bytes pass through unchanged.
inline std::string normalize_answer(std::string_view text) {
    std::string spaced;
    spaced.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (c < 0x80) {
            if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
                spaced += static_cast<char>(c);
            } else if (c >= 'A' && c <= 'Z') {
                spaced += static_cast<char>(c - 'A' + 'a');
            } else {
                spaced += ' ';
            }
            ++i;
        } else if (c == 0xE2 && i + 2 < text.size() &&
                   static_cast<unsigned char>(text[i + 1]) == 0x80) {
            const unsigned char third = static_cast<unsigned char>(text[i + 2]);
            // U+2010..U+201F (hyphens, dashes, quotes) and U+2026 (ellipsis)
            if ((third >= 0x90 && third <= 0x9F) || third == 0xA6) {
                spaced += ' ';
            } else {
                spaced.append(text.substr(i, 3));
            }
            i += 3;
        } else if (c == 0xC2 && i + 1 < text.size() &&
                   static_cast<unsigned char>(text[i + 1]) == 0xA0) {
            spaced += ' ';
            i += 2;
        } else {
            spaced += static_cast<char>(c);
            ++i;
        }
    }

    std::string out;
    out.reserve(spaced.size());
    std::size_t pos = 0;
    while (pos < spaced.size()) {
        while (pos < spaced.size() && spaced[pos] == ' ') ++pos;
        std::size_t end = pos;
        while (end < spaced.size() && spaced[end] != ' ') ++end;
        if (end > pos) {
            std::string_view token(&spaced[pos], end - pos);
            if (token != "a" && token != "an" && token != "the") {
                if (!out.empty()) out += ' ';
                out.append(token);
            }
        }
        pos = end;
    }
    return out;
}

inline std::vector<std::string> normalized_tokens(std::string_view text) {
    const std::string norm = normalize_answer(text);
    std::vector<std::string> tokens;
    std::size_t pos = 0;
    while (pos < norm.size()) {
        std::size_t end = norm.find(' ', pos);
        if (end == std::string::npos) end = norm.size();
        tokens.emplace_back(norm.substr(pos, end - pos));
        pos = end + 1;
    }
    return tokens;
}

// 1 iff the normalized prediction equals any normalized gold.
inline int exact_match(std::string_view prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) throw std::invalid_argument("exact_match: golds must be nonempty");
    const std::string pred = normalize_answer(prediction);
    for (const std::string& gold : golds)
        if (pred == normalize_answer(gold)) return 1;
    return 0;
}

// Token-level F1 with multiset overlap, maximized over golds.
inline double token_f1(std::string_view prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) throw std::invalid_argument("token_f1: golds must be nonempty");
    const std::vector<std::string> pred = normalized_tokens(prediction);
    double best = 0.0;
    for (const std::string& gold_raw : golds) {
        const std::vector<std::string> gold = normalized_tokens(gold_raw);
        if (pred.empty() && gold.empty()) {
            best = 1.0;
            continue;
        }
        if (pred.empty() || gold.empty()) continue;
        std::map<std::string_view, int> counts;
        for (const std::string& t : gold) ++counts[t];
        int overlap = 0;
        for (const std::string& t : pred) {
            auto it = counts.find(t);
            if (it != counts.end() && it->second > 0) {
                --it->second;
                ++overlap;
            }
        }
        if (overlap == 0) continue;
        const double precision = double(overlap) / double(pred.size());
        const double recall = double(overlap) / double(gold.size());
        best = std::max(best, 2.0 * precision * recall / (precision + recall));
    }
    return best;
}

// First standalone yes/no token, case-insensitive; nullopt when absent.
inline std::optional<std::string> extract_boolean(std::string_view raw) {
    std::string token;
    auto flush = [&token]() -> std::optional<std::string> {
        if (token == "yes" || token == "no") return token;
        token.clear();
        return std::nullopt;
    };
    for (char ch : raw) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
            token += static_cast<char>(c);
        } else if (c >= 'A' && c <= 'Z') {
            token += static_cast<char>(c - 'A' + 'a');
        } else {
            if (auto hit = flush()) return hit;
        }
    }
    return flush();
}

enum class TaskKind { open_qa, multihop_qa, boolean_qa };

inline TaskKind task_from_string(std::string_view s) {
    if (s == "open_qa") return TaskKind::open_qa;
    if (s == "multihop_qa") return TaskKind::multihop_qa;
    if (s == "boolean" || s == "boolean_qa") return TaskKind::boolean_qa;
    throw std::invalid_argument("unknown task kind: " + std::string(s));
}

inline const char* to_string(TaskKind task) {
    switch (task) {
        case TaskKind::open_qa: return "open_qa";
        case TaskKind::multihop_qa: return "multihop_qa";
        case TaskKind::boolean_qa: return "boolean";
    }
    return "open_qa";
}

struct EvalExample {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;
    TaskKind task = TaskKind::open_qa;

    void validate() const {
        if (id.empty()) throw std::invalid_argument("EvalExample: id must be nonempty");
        if (question.empty())
            throw std::invalid_argument("EvalExample '" + id + "': question must be nonempty");
        if (gold_answers.empty())
            throw std::invalid_argument("EvalExample '" + id + "': answers must be nonempty");
        if (task == TaskKind::boolean_qa) {
            for (const std::string& g : gold_answers) {
                const std::string n = normalize_answer(g);
                if (n != "yes" && n != "no")
                    throw std::invalid_argument("EvalExample '" + id +
                                                "': boolean gold must be yes or no");
            }
        }
    }
};

struct PredictedAnswer {
    std::string id;
    std::string text;
    bool failed = false;
};

struct ExampleScore {
    std::string id;
    double em = 0.0;
    double f1 = 0.0;
};

struct MetricReport {
    double em = 0.0;
    double f1 = 0.0;
    std::size_t n_examples = 0;
    std::vector<ExampleScore> per_example;
};

class MissingReportError : public std::runtime_error {
  public:
    explicit MissingReportError(const std::string& id)
        : std::runtime_error("no report for example id '" + id + "'") {}
};

// Scores one prediction per example. Boolean tasks run the prediction through
// extract_boolean and score EM only (f1 mirrors em); failed or unanswered
// questions score zero on both metrics and stay in the denominator.
inline MetricReport evaluate_run(const std::vector<PredictedAnswer>& predictions,
                                 const std::vector<EvalExample>& examples) {
    std::unordered_map<std::string_view, const PredictedAnswer*> by_id;
    by_id.reserve(predictions.size());
    for (const PredictedAnswer& p : predictions) by_id[p.id] = &p;

    MetricReport report;
    report.per_example.reserve(examples.size());
    double em_sum = 0.0, f1_sum = 0.0;
    for (const EvalExample& ex : examples) {
        ex.validate();
        auto it = by_id.find(ex.id);
        if (it == by_id.end()) throw MissingReportError(ex.id);
        const PredictedAnswer& pred = *it->second;

        ExampleScore score{ex.id, 0.0, 0.0};
        if (!pred.failed) {
            if (ex.task == TaskKind::boolean_qa) {
                if (auto verdict = extract_boolean(pred.text)) {
                    score.em = exact_match(*verdict, ex.gold_answers);
                    score.f1 = score.em;
                }
            } else {
                score.em = exact_match(pred.text, ex.gold_answers);
                score.f1 = token_f1(pred.text, ex.gold_answers);
            }
        }
        em_sum += score.em;
        f1_sum += score.f1;
        report.per_example.push_back(std::move(score));
    }
    report.n_examples = examples.size();
    if (report.n_examples > 0) {
        report.em = em_sum / double(report.n_examples);
        report.f1 = f1_sum / double(report.n_examples);
    }
    return report;
}

// Dataset ingestion: JSON-lines with fields id, question, answers, optional task.
inline std::vector<EvalExample> load_dataset_jsonl(std::istream& in) {
    std::vector<EvalExample> examples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
        EvalExample ex;
        ex.id = obj.at("id").get<std::string>();
        ex.question = obj.at("question").get<std::string>();
        ex.gold_answers = obj.at("answers").get<std::vector<std::string>>();
        if (obj.contains("task")) ex.task = task_from_string(obj["task"].get<std::string>());
        ex.validate();
        examples.push_back(std::move(ex));
    }
    return examples;
}

}  // namespace voterag
