#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <locale>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccac/error.hpp"
#include "ccac/ngram.hpp"
#include "ccac/text.hpp"

namespace ccac {

// ---------------------------------------------------------------------------
// Perplexity

inline double perplexity(const std::vector<double>& logprobs) {
  if (logprobs.empty()) throw Error(Errc::EmptySequence, "no scored tokens");
  double sum = 0.0;
  for (double lp : logprobs) sum += lp;
  return std::exp(-sum / static_cast<double>(logprobs.size()));
}

inline double perplexity(const ScoredSequence& scored) { return perplexity(scored.logprobs); }

// Pools every token of every sequence: exp of the token-weighted mean NLL.
inline double corpus_perplexity(const std::vector<std::vector<double>>& sequences) {
  if (sequences.empty()) throw Error(Errc::EmptyInput, "no sequences");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : sequences) {
    for (double lp : s) sum += lp;
    count += s.size();
  }
  if (count == 0) throw Error(Errc::EmptySequence, "no scored tokens");
  return std::exp(-sum / static_cast<double>(count));
}

inline double corpus_perplexity(const std::vector<ScoredSequence>& scored) {
  std::vector<std::vector<double>> lps;
  lps.reserve(scored.size());
  for (const auto& s : scored) lps.push_back(s.logprobs);
  return corpus_perplexity(lps);
}

// ---------------------------------------------------------------------------
// Embedded sentences

using Vec = std::vector<double>;

struct EmbeddedSentence {
  std::vector<std::string> tokens;
  std::vector<Vec> vectors;

  EmbeddedSentence() = default;
  EmbeddedSentence(std::vector<std::string> toks, std::vector<Vec> vecs)
      : tokens(std::move(toks)), vectors(std::move(vecs)) {
    if (tokens.size() != vectors.size()) {
      throw Error(Errc::DimensionMismatch, std::to_string(tokens.size()) + " tokens but " +
                                               std::to_string(vectors.size()) + " vectors");
    }
    for (const auto& v : vectors) {
      if (v.size() != vectors.front().size()) throw Error(Errc::DimensionMismatch, "ragged vectors");
    }
  }

  std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().size(); }

  Vec mean_vector() const {
    Vec m(dim(), 0.0);
    for (const auto& v : vectors) {
      for (std::size_t d = 0; d < m.size(); ++d) m[d] += v[d];
    }
    for (double& x : m) x /= static_cast<double>(vectors.size());
    return m;
  }
};

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

// ---------------------------------------------------------------------------
// BERTScore with greedy matching

struct BertScoreTriple {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

inline double harmonic_f1(double precision, double recall) {
  const double s = precision + recall;
  return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

namespace detail {

inline std::vector<Vec> unit_rows(const std::vector<Vec>& vs) {
  std::vector<Vec> out = vs;
  for (auto& v : out) {
    const double n = norm(v);
    if (n > 0.0) {
      for (double& x : v) x /= n;
    }
  }
  return out;
}

inline void check_pair(const EmbeddedSentence& a, const EmbeddedSentence& b) {
  if (a.vectors.empty() || b.vectors.empty()) throw Error(Errc::EmptySentence, "sentence has no tokens");
  if (a.dim() != b.dim()) {
    throw Error(Errc::DimensionMismatch,
                "dimension " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
}

}  // namespace detail

// Every token vector is unit-normalized, so inner products are cosines.
// Recall matches each reference token to its best candidate token, precision
// each candidate token to its best reference token.
inline BertScoreTriple bertscore(const EmbeddedSentence& reference, const EmbeddedSentence& candidate) {
  detail::check_pair(reference, candidate);
  const auto ref = detail::unit_rows(reference.vectors);
  const auto cand = detail::unit_rows(candidate.vectors);
  const std::size_t k = ref.size();
  const std::size_t l = cand.size();

  std::vector<double> row_best(k, -std::numeric_limits<double>::infinity());
  std::vector<double> col_best(l, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      const double sim = dot(ref[i], cand[j]);
      if (sim > row_best[i]) row_best[i] = sim;
      if (sim > col_best[j]) col_best[j] = sim;
    }
  }
  BertScoreTriple t;
  for (double v : row_best) t.recall += v;
  for (double v : col_best) t.precision += v;
  t.recall /= static_cast<double>(k);
  t.precision /= static_cast<double>(l);
  t.f1 = harmonic_f1(t.precision, t.recall);
  return t;
}

// Cosine of the two sentences' mean token vectors.
inline double avg_cosine(const EmbeddedSentence& reference, const EmbeddedSentence& candidate) {
  detail::check_pair(reference, candidate);
  const Vec a = reference.mean_vector();
  const Vec b = candidate.mean_vector();
  const double na = norm(a);
  const double nb = norm(b);
  if (na < 1e-12 || nb < 1e-12) throw Error(Errc::ZeroVector, "mean vector has zero norm");
  double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Static embedding tables
//
//   #dim D
//   token<TAB>v1 v2 ... vD

class EmbeddingTable {
 public:
  static constexpr std::string_view kUnk = "<unk>";

  EmbeddingTable(std::size_t dim, std::map<std::string, Vec, std::less<>> rows)
      : dim_(dim), rows_(std::move(rows)) {
    auto it = rows_.find(kUnk);
    if (it == rows_.end()) throw Error(Errc::MissingUnkVector, "table has no <unk> vector");
    unk_ = &it->second;
  }

  EmbeddingTable(const EmbeddingTable& o) : EmbeddingTable(o.dim_, o.rows_) {}
  EmbeddingTable& operator=(const EmbeddingTable&) = delete;

  static EmbeddingTable parse(std::string_view content) {
    std::vector<std::string> lines = text::split(content, '\n');
    std::size_t li = 0;
    auto next_line = [&]() -> std::optional<std::string> {
      while (li < lines.size()) {
        std::string l = lines[li++];
        if (!l.empty() && l.back() == '\r') l.pop_back();
        if (!text::trim(l).empty()) return l;
      }
      return std::nullopt;
    };
    auto header = next_line();
    if (!header) throw Error(Errc::MalformedTable, "empty embedding table");
    std::istringstream hs(*header);
    std::string tag;
    long long dim = 0;
    if (!(hs >> tag >> dim) || tag != "#dim" || dim <= 0) {
      throw Error(Errc::MalformedTable, "first line must be '#dim D'");
    }
    std::map<std::string, Vec, std::less<>> rows;
    while (auto line = next_line()) {
      const std::size_t tab = line->find('\t');
      if (tab == std::string::npos || tab == 0) {
        throw Error(Errc::MalformedTable, "line " + std::to_string(li) + ": expected token<TAB>vector");
      }
      Vec v;
      std::istringstream vs(line->substr(tab + 1));
      vs.imbue(std::locale::classic());
      double x;
      while (vs >> x) v.push_back(x);
      if (!vs.eof() || v.size() != static_cast<std::size_t>(dim)) {
        throw Error(Errc::MalformedTable, "line " + std::to_string(li) + ": expected " +
                                              std::to_string(dim) + " numbers");
      }
      rows[line->substr(0, tab)] = std::move(v);
    }
    return EmbeddingTable(static_cast<std::size_t>(dim), std::move(rows));
  }

  static EmbeddingTable load(const std::string& path) { return parse(text::read_file(path)); }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }

  const Vec& lookup(std::string_view token) const {
    auto it = rows_.find(token);
    return it == rows_.end() ? *unk_ : it->second;
  }

  EmbeddedSentence embed(const std::vector<std::string>& words) const {
    std::vector<Vec> vecs;
    vecs.reserve(words.size());
    for (const auto& w : words) vecs.push_back(lookup(w));
    return EmbeddedSentence(words, std::move(vecs));
  }

 private:
  std::size_t dim_;
  std::map<std::string, Vec, std::less<>> rows_;
  const Vec* unk_ = nullptr;
};

inline EmbeddingTable load_static_embeddings(const std::string& path) { return EmbeddingTable::load(path); }

inline EmbeddedSentence embed_static(const std::vector<std::string>& words, const EmbeddingTable& table) {
  return table.embed(words);
}

// ---------------------------------------------------------------------------
// Contextual embedding files: JSONL of {id, tokens, vectors[, text]}

struct ContextualRecord {
  std::string id;
  std::optional<std::string> text;
  EmbeddedSentence sentence;
};

inline ContextualRecord parse_contextual_record(const nlohmann::json& j) {
  try {
    ContextualRecord r;
    const auto& id = j.at("id");
    r.id = id.is_string() ? id.get<std::string>() : id.dump();
    if (j.contains("text")) r.text = j.at("text").get<std::string>();
    r.sentence = EmbeddedSentence(j.at("tokens").get<std::vector<std::string>>(),
                                  j.at("vectors").get<std::vector<Vec>>());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedTable, std::string("contextual record: ") + e.what());
  }
}

inline std::vector<ContextualRecord> load_contextual_embeddings(const std::string& path) {
  std::vector<ContextualRecord> out;
  for (const auto& line : text::read_lines(path)) {
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedTable, path + ": " + e.what());
    }
    out.push_back(parse_contextual_record(j));
  }
  return out;
}

}  // namespace ccac
