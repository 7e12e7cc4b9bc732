#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccac/error.hpp"
#include "ccac/text.hpp"
#include "ccac/vocab.hpp"

namespace ccac {

// Token ids x0..xt with log p(x_i | x_<i) for i >= 1.
struct ScoredSequence {
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;
};

// Interpolated absolute-discounting n-gram model:
//
//   P_k(w | h) = max(c(h,w) - D, 0) / c(h) + D * N1+(h.) / c(h) * P_{k-1}(w | h')
//
// with h' the context minus its oldest word, falling through to P_{k-1} when
// c(h) = 0, and a uniform distribution over predictable tokens below order 1.
class NGramModel {
 public:
  struct ContextStats {
    std::size_t total = 0;
    std::map<TokenId, std::size_t> next;
  };
  using Table = std::map<std::vector<TokenId>, ContextStats>;

  static constexpr double kDefaultDiscount = 0.75;
  static constexpr std::size_t kDefaultOrder = 3;
  static constexpr int kFormatVersion = 1;

  NGramModel(Vocabulary vocab, std::size_t order, double discount)
      : vocab_(std::move(vocab)), order_(order), discount_(discount), tables_(order) {
    if (order_ < 1) throw Error(Errc::InvalidConfig, "order must be >= 1");
    if (!(discount_ > 0.0 && discount_ < 1.0)) {
      throw Error(Errc::InvalidConfig, "discount must lie in (0,1)");
    }
    for (TokenId id = 0; id < vocab_.size(); ++id) {
      if (Vocabulary::predictable(id)) ++predictable_count_;
    }
  }

  static NGramModel train(const std::vector<std::vector<std::string>>& sentences,
                          const Vocabulary& vocab, std::size_t order = kDefaultOrder,
                          double discount = kDefaultDiscount) {
    if (sentences.empty()) throw Error(Errc::EmptyCorpus, "no training sentences");
    NGramModel m(vocab, order, discount);
    for (const auto& s : sentences) {
      std::vector<TokenId> seq(order - 1, Vocabulary::kSos);
      for (const auto& w : s) seq.push_back(m.vocab_.id(w));
      seq.push_back(Vocabulary::kEos);
      for (std::size_t i = order - 1; i < seq.size(); ++i) {
        for (std::size_t k = 1; k <= order; ++k) {
          std::vector<TokenId> ctx(seq.begin() + static_cast<std::ptrdiff_t>(i - (k - 1)),
                                   seq.begin() + static_cast<std::ptrdiff_t>(i));
          auto& st = m.tables_[k - 1][ctx];
          ++st.total;
          ++st.next[seq[i]];
        }
      }
    }
    return m;
  }

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t order() const { return order_; }
  double discount() const { return discount_; }
  const Table& table(std::size_t k) const { return tables_.at(k - 1); }

  // Distribution over the whole vocabulary (<sos> and <pad> get 0). Uses the
  // last order-1 context tokens, left-padded with <sos>.
  std::vector<double> next_dist(std::span<const TokenId> context) const {
    std::vector<TokenId> padded(order_ - 1, Vocabulary::kSos);
    const std::size_t take = std::min(context.size(), order_ - 1);
    std::copy(context.end() - static_cast<std::ptrdiff_t>(take), context.end(),
              padded.end() - static_cast<std::ptrdiff_t>(take));

    std::vector<double> p(vocab_.size(), 0.0);
    const double uniform = 1.0 / static_cast<double>(predictable_count_);
    for (TokenId id = 0; id < p.size(); ++id) {
      if (Vocabulary::predictable(id)) p[id] = uniform;
    }
    for (std::size_t k = 1; k <= order_; ++k) {
      std::vector<TokenId> ctx(padded.end() - static_cast<std::ptrdiff_t>(k - 1), padded.end());
      auto it = tables_[k - 1].find(ctx);
      if (it == tables_[k - 1].end()) break;  // longer contexts are unseen too
      const ContextStats& st = it->second;
      const double total = static_cast<double>(st.total);
      const double backoff = discount_ * static_cast<double>(st.next.size()) / total;
      for (auto& v : p) v *= backoff;
      for (const auto& [w, c] : st.next) p[w] += (static_cast<double>(c) - discount_) / total;
    }
    return p;
  }

  std::vector<double> next_dist(std::span<const std::string> context_words) const {
    std::vector<TokenId> ids;
    ids.reserve(context_words.size());
    for (const auto& w : context_words) ids.push_back(vocab_.id(w));
    return next_dist(std::span<const TokenId>(ids));
  }

  // Log-likelihood of every word and the closing <eos>, conditioned from <sos>.
  ScoredSequence score(const std::vector<std::string>& words) const {
    ScoredSequence out;
    out.tokens.push_back(Vocabulary::kSos);
    for (const auto& w : words) out.tokens.push_back(vocab_.id(w));
    out.tokens.push_back(Vocabulary::kEos);
    for (std::size_t i = 1; i < out.tokens.size(); ++i) {
      std::span<const TokenId> prefix(out.tokens.data() + 1, i - 1);
      auto dist = next_dist(prefix);
      out.logprobs.push_back(std::log(dist[out.tokens[i]]));
    }
    return out;
  }

  std::string content_hash() const { return text::hex64(text::fnv1a64(to_json().dump())); }

  nlohmann::json to_json() const {
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& table : tables_) {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& [ctx, st] : table) {
        nlohmann::json next = nlohmann::json::array();
        for (const auto& [w, c] : st.next) next.push_back({w, c});
        rows.push_back({{"ctx", ctx}, {"next", std::move(next)}});
      }
      counts.push_back(std::move(rows));
    }
    return nlohmann::json{{"format", "ccac-ngram"}, {"version", kFormatVersion},
                          {"order", order_},        {"discount", discount_},
                          {"vocab_hash", vocab_.hash()}, {"vocab", vocab_.tokens()},
                          {"counts", std::move(counts)}};
  }

  static NGramModel from_json(const nlohmann::json& j, const Vocabulary* expected_vocab = nullptr) {
    try {
      if (j.at("format") != "ccac-ngram") throw Error(Errc::BadModel, "not an n-gram model file");
      if (j.at("version").get<int>() != kFormatVersion) {
        throw Error(Errc::BadModel, "unsupported model version " + j.at("version").dump());
      }
      Vocabulary vocab(j.at("vocab").get<std::vector<std::string>>());
      const auto stored_hash = j.at("vocab_hash").get<std::string>();
      if (stored_hash != vocab.hash()) {
        throw Error(Errc::VocabMismatch, "stored hash " + stored_hash + " != vocab " + vocab.hash());
      }
      if (expected_vocab && expected_vocab->hash() != stored_hash) {
        throw Error(Errc::VocabMismatch,
                    "model vocab " + stored_hash + " != expected " + expected_vocab->hash());
      }
      NGramModel m(std::move(vocab), j.at("order").get<std::size_t>(), j.at("discount").get<double>());
      const auto& counts = j.at("counts");
      if (counts.size() != m.order_) throw Error(Errc::BadModel, "count tables do not match order");
      for (std::size_t k = 0; k < m.order_; ++k) {
        for (const auto& row : counts[k]) {
          auto ctx = row.at("ctx").get<std::vector<TokenId>>();
          if (ctx.size() != k) throw Error(Errc::BadModel, "context length mismatch");
          auto& st = m.tables_[k][ctx];
          for (const auto& pair : row.at("next")) {
            auto w = pair.at(0).get<TokenId>();
            auto c = pair.at(1).get<std::size_t>();
            if (w >= m.vocab_.size() || c == 0) throw Error(Errc::BadModel, "bad count entry");
            st.next[w] = c;
            st.total += c;
          }
        }
      }
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BadModel, e.what());
    }
  }

  void save(const std::string& path) const { text::write_file(path, to_json().dump() + "\n"); }

  static NGramModel load(const std::string& path, const Vocabulary* expected_vocab = nullptr) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text::read_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BadModel, path + ": " + e.what());
    }
    return from_json(j, expected_vocab);
  }

 private:
  Vocabulary vocab_;
  std::size_t order_;
  double discount_;
  std::size_t predictable_count_ = 0;
  std::vector<Table> tables_;  // tables_[k-1]: contexts of length k-1
};

}  // namespace ccac
