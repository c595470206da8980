#pragma once

#include <voterag/backends.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace voterag {

struct CorpusDoc {
    std::string doc_id;
    std::string text;
};

// In-memory Okapi BM25 index over a small corpus.
//
//   score(d, q) = sum over unique query terms t of
//       idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))
//   idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)),  k1 = 1.2, b = 0.75
//
// Tokens are ASCII-lowercased alphanumeric runs. Ties are broken by doc_id
// ascending, so rankings are deterministic. Immutable after construction.
class LexicalIndex {
  public:
    static constexpr double k1 = 1.2;
    static constexpr double b = 0.75;

    explicit LexicalIndex(std::vector<CorpusDoc> docs) : docs_(std::move(docs)) {
        if (docs_.empty()) throw EmptyIndexError("lexical index: corpus is empty");
        std::unordered_set<std::string_view> seen;
        doc_len_.resize(docs_.size());
        double total_len = 0.0;
        for (std::size_t i = 0; i < docs_.size(); ++i) {
            if (!seen.insert(docs_[i].doc_id).second)
                throw std::invalid_argument("lexical index: duplicate doc_id '" +
                                            docs_[i].doc_id + "'");
            const auto tokens = tokenize(docs_[i].text);
            doc_len_[i] = static_cast<double>(tokens.size());
            total_len += doc_len_[i];
            std::unordered_map<std::string, std::uint32_t> counts;
            for (const std::string& t : tokens) ++counts[t];
            for (const auto& [term, tf] : counts)
                postings_[term].push_back({static_cast<std::uint32_t>(i), tf});
        }
        avg_len_ = total_len / static_cast<double>(docs_.size());
    }

    static LexicalIndex from_jsonl(std::istream& in) {
        std::vector<CorpusDoc> docs;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            nlohmann::json obj;
            try {
                obj = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw std::runtime_error("corpus line " + std::to_string(lineno) + ": " +
                                         e.what());
            }
            docs.push_back({obj.at("doc_id").get<std::string>(),
                            obj.at("text").get<std::string>()});
        }
        return LexicalIndex(std::move(docs));
    }

    std::size_t size() const { return docs_.size(); }

    std::vector<RetrievedDoc> search(std::string_view query, int top_k) const {
        if (docs_.empty()) throw EmptyIndexError("lexical index: corpus is empty");
        if (top_k < 1) return {};
        std::set<std::string> terms;
        for (const std::string& t : tokenize(query)) terms.insert(t);

        std::unordered_map<std::uint32_t, double> scores;
        const double n_docs = static_cast<double>(docs_.size());
        for (const std::string& term : terms) {
            auto it = postings_.find(term);
            if (it == postings_.end()) continue;
            const double df = static_cast<double>(it->second.size());
            const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
            for (const Posting& post : it->second) {
                const double tf = static_cast<double>(post.tf);
                const double norm = tf + k1 * (1.0 - b + b * doc_len_[post.doc] / avg_len_);
                scores[post.doc] += idf * tf * (k1 + 1.0) / norm;
            }
        }

        std::vector<std::pair<std::uint32_t, double>> ranked(scores.begin(), scores.end());
        std::sort(ranked.begin(), ranked.end(), [this](const auto& a, const auto& b_) {
            if (a.second != b_.second) return a.second > b_.second;
            return docs_[a.first].doc_id < docs_[b_.first].doc_id;
        });
        if (static_cast<int>(ranked.size()) > top_k) ranked.resize(top_k);

        std::vector<RetrievedDoc> out;
        out.reserve(ranked.size());
        for (const auto& [doc, score] : ranked)
            out.push_back({docs_[doc].doc_id, docs_[doc].text, score});
        return out;
    }

    static std::vector<std::string> tokenize(std::string_view text) {
        std::vector<std::string> out;
        std::string cur;
        for (char ch : text) {
            const unsigned char c = static_cast<unsigned char>(ch);
            if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
                cur += static_cast<char>(c);
            } else if (c >= 'A' && c <= 'Z') {
                cur += static_cast<char>(c - 'A' + 'a');
            } else if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        }
        if (!cur.empty()) out.push_back(std::move(cur));
        return out;
    }

  private:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };

    std::vector<CorpusDoc> docs_;
    std::vector<double> doc_len_;
    double avg_len_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

class LexicalRetriever : public RetrieverBackend {
  public:
    explicit LexicalRetriever(LexicalIndex index) : index_(std::move(index)) {}

    std::vector<RetrievedDoc> search(const std::string& query, int top_k) override {
        return index_.search(query, top_k);
    }

    // reads only: safe under any concurrency
    bool supports_concurrent_calls() const override { return true; }

    const LexicalIndex& index() const { return index_; }

  private:
    LexicalIndex index_;
};

}  // namespace voterag
