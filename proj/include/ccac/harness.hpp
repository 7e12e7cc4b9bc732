#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccac/backend.hpp"
#include "ccac/error.hpp"
#include "ccac/generate.hpp"
#include "ccac/metrics.hpp"
#include "ccac/preprocess.hpp"
#include "ccac/text.hpp"

namespace ccac {

enum class SeedFraction { P30, P50 };
enum class CandidateSet { All5, Top2 };
enum class MetricKind { BertScoreF, AvgCosine };
enum class Aggregate { Mean, Min, Max };

struct Scenario {
  SeedFraction seed_fraction;
  CandidateSet candidate_set;
};

// Column order of the bucket tables.
inline constexpr std::array<Scenario, 4> kScenarios{{
    {SeedFraction::P30, CandidateSet::All5},
    {SeedFraction::P50, CandidateSet::All5},
    {SeedFraction::P30, CandidateSet::Top2},
    {SeedFraction::P50, CandidateSet::Top2},
}};

inline const std::vector<double>& default_thresholds() {
  static const std::vector<double> t{0.95, 0.90, 0.80, 0.70};
  return t;
}

constexpr std::string_view fraction_name(SeedFraction f) { return f == SeedFraction::P30 ? "30" : "50"; }

constexpr std::string_view set_name(CandidateSet c) { return c == CandidateSet::All5 ? "all5" : "top2"; }

inline std::string scenario_name(const Scenario& s) {
  return std::string(set_name(s.candidate_set)) + "_" + std::string(fraction_name(s.seed_fraction));
}

constexpr std::string_view metric_name(MetricKind m) {
  return m == MetricKind::BertScoreF ? "bertscore_f" : "avg_cosine";
}

constexpr std::string_view aggregate_name(Aggregate a) {
  switch (a) {
    case Aggregate::Mean: return "mean";
    case Aggregate::Min: return "min";
    case Aggregate::Max: return "max";
  }
  return "mean";
}

inline Aggregate parse_aggregate(std::string_view s) {
  if (s == "mean") return Aggregate::Mean;
  if (s == "min") return Aggregate::Min;
  if (s == "max") return Aggregate::Max;
  throw Error(Errc::InvalidConfig, "aggregate must be mean|min|max, got '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Bucketing and aggregation

// Bins [t0, inf), [t1, t0), ..., (-inf, t_last); thresholds strictly descending.
inline std::vector<std::size_t> bucketize(const std::vector<double>& scores,
                                          const std::vector<double>& thresholds = default_thresholds()) {
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] < thresholds[i - 1])) {
      throw Error(Errc::InvalidConfig, "thresholds must be strictly descending");
    }
  }
  std::vector<std::size_t> counts(thresholds.size() + 1, 0);
  for (double s : scores) {
    std::size_t bin = thresholds.size();
    for (std::size_t b = 0; b < thresholds.size(); ++b) {
      if (s >= thresholds[b]) {
        bin = b;
        break;
      }
    }
    ++counts[bin];
  }
  return counts;
}

inline double aggregate_reference(const std::vector<double>& scores, CandidateSet set,
                                  Aggregate how = Aggregate::Mean, std::size_t arity = 5) {
  if (scores.size() != arity || arity < 2) {
    throw Error(Errc::WrongArity, "expected " + std::to_string(arity) + " candidate scores, got " +
                                      std::to_string(scores.size()));
  }
  std::vector<double> pool = scores;
  std::sort(pool.begin(), pool.end(), std::greater<>());
  if (set == CandidateSet::Top2) pool.resize(2);
  switch (how) {
    case Aggregate::Min: return pool.back();
    case Aggregate::Max: return pool.front();
    case Aggregate::Mean: break;
  }
  double sum = 0.0;
  for (double v : pool) sum += v;
  return sum / static_cast<double>(pool.size());
}

// ---------------------------------------------------------------------------
// Evaluation inputs

struct EvalItem {
  std::size_t sentence_id = 0;
  std::string reference;
  std::string seed30;
  std::string seed50;

  const std::string& seed(SeedFraction f) const { return f == SeedFraction::P30 ? seed30 : seed50; }
};

inline bool is_word_prefix(const std::vector<std::string>& prefix, const std::vector<std::string>& whole) {
  return prefix.size() <= whole.size() && std::equal(prefix.begin(), prefix.end(), whole.begin());
}

// seeds.tsv rows paired line by line with the reference sentences (test.txt).
inline std::vector<EvalItem> load_eval_items(const std::string& seeds_path, const std::string& references_path) {
  auto rows = text::read_lines(seeds_path);
  auto refs = text::read_lines(references_path);
  if (!rows.empty() && rows.front().rfind("sentence_id", 0) == 0) rows.erase(rows.begin());
  if (rows.size() != refs.size()) {
    throw Error(Errc::BadFixture, std::to_string(rows.size()) + " seed rows but " +
                                      std::to_string(refs.size()) + " reference sentences");
  }
  std::vector<EvalItem> items;
  items.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto cols = text::split(rows[i], '\t');
    if (cols.size() != 5) throw Error(Errc::BadFixture, "seeds row " + std::to_string(i) + ": need 5 columns");
    EvalItem it;
    try {
      it.sentence_id = std::stoull(cols[0]);
    } catch (const std::exception&) {
      throw Error(Errc::BadFixture, "seeds row " + std::to_string(i) + ": bad sentence_id");
    }
    it.seed30 = cols[2];
    it.seed50 = cols[4];
    it.reference = refs[i];
    const auto ref_words = tokenize_words(it.reference);
    if (!is_word_prefix(tokenize_words(it.seed30), ref_words) ||
        !is_word_prefix(tokenize_words(it.seed50), ref_words)) {
      throw Error(Errc::BadFixture, "seeds row " + std::to_string(i) + " is not a prefix of its reference");
    }
    items.push_back(std::move(it));
  }
  return items;
}

// Where candidate completions come from.
class CandidateSource {
 public:
  virtual ~CandidateSource() = default;
  virtual std::vector<std::string> candidates(const EvalItem& item, SeedFraction f) = 0;
  virtual std::string identity() const = 0;
  virtual nlohmann::json config() const { return nullptr; }
  // Per-call generation latency in ms; empty for recorded sources.
  virtual std::vector<double> latencies_ms() const { return {}; }
};

class LiveCandidateSource final : public CandidateSource {
 public:
  LiveCandidateSource(const Backend& backend, GenerationConfig cfg) : backend_(backend), cfg_(std::move(cfg)) {}

  std::vector<std::string> candidates(const EvalItem& item, SeedFraction f) override {
    GenerationConfig cfg = cfg_;
    cfg.rng_seed = derive_seed(cfg_.rng_seed.value_or(0),
                               item.sentence_id * 2 + (f == SeedFraction::P30 ? 0 : 1));
    auto t0 = std::chrono::steady_clock::now();
    auto cands = complete(backend_, item.seed(f), cfg);
    auto t1 = std::chrono::steady_clock::now();
    latencies_.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    std::vector<std::string> out;
    for (auto& c : cands) out.push_back(std::move(c.full_text));
    return out;
  }

  std::string identity() const override { return backend_.name(); }
  nlohmann::json config() const override { return cfg_.to_json(); }
  std::vector<double> latencies_ms() const override { return latencies_; }

 private:
  const Backend& backend_;
  GenerationConfig cfg_;
  std::vector<double> latencies_;
};

// JSONL of {sentence_id, fraction: "30"|"50", candidates: [full texts]}.
class RecordedCandidateSource final : public CandidateSource {
 public:
  explicit RecordedCandidateSource(const std::string& path)
      : identity_("recorded:" + std::filesystem::path(path).filename().string()) {
    for (const auto& line : text::read_lines(path)) {
      if (text::trim(line).empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        auto id = j.at("sentence_id").get<std::size_t>();
        auto frac = j.at("fraction").is_string() ? j.at("fraction").get<std::string>()
                                                  : std::to_string(j.at("fraction").get<int>());
        if (frac != "30" && frac != "50") throw Error(Errc::BadFixture, "fraction must be 30 or 50");
        table_[{id, frac}] = j.at("candidates").get<std::vector<std::string>>();
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::BadFixture, path + ": " + e.what());
      }
    }
  }

  std::vector<std::string> candidates(const EvalItem& item, SeedFraction f) override {
    auto it = table_.find({item.sentence_id, std::string(fraction_name(f))});
    if (it == table_.end()) {
      throw Error(Errc::BackendUnavailable, "no recorded candidates for sentence " +
                                                std::to_string(item.sentence_id) + " at " +
                                                std::string(fraction_name(f)) + "%");
    }
    return it->second;
  }

  std::string identity() const override { return identity_; }

 private:
  std::string identity_;
  std::map<std::pair<std::size_t, std::string>, std::vector<std::string>> table_;
};

// Sentence text -> token vectors.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddedSentence embed(const std::string& sentence) const = 0;
  virtual std::vector<EmbeddedSentence> embed_batch(const std::vector<std::string>& sentences) const {
    std::vector<EmbeddedSentence> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) out.push_back(embed(s));
    return out;
  }
  virtual std::string provenance() const = 0;
};

class StaticEmbeddingProvider final : public EmbeddingProvider {
 public:
  StaticEmbeddingProvider(EmbeddingTable table, std::string provenance)
      : table_(std::move(table)), provenance_(std::move(provenance)) {}

  EmbeddedSentence embed(const std::string& sentence) const override {
    auto words = tokenize_words(sentence);
    if (words.empty()) throw Error(Errc::EmptySentence, "nothing to embed in '" + sentence + "'");
    return table_.embed(words);
  }

  std::string provenance() const override { return provenance_; }

 private:
  EmbeddingTable table_;
  std::string provenance_;
};

// Precomputed contextual vectors looked up by the sentence's normalized text
// (the record's "text" field, or its tokens joined by single spaces).
class ContextualFileProvider final : public EmbeddingProvider {
 public:
  explicit ContextualFileProvider(const std::string& path)
      : provenance_("contextual:" + std::filesystem::path(path).filename().string()) {
    for (auto& r : load_contextual_embeddings(path)) {
      std::string key = r.text ? text::join(tokenize_words(*r.text)) : text::join(r.sentence.tokens);
      by_text_.emplace(std::move(key), std::move(r.sentence));
    }
  }

  EmbeddedSentence embed(const std::string& sentence) const override {
    auto it = by_text_.find(text::join(tokenize_words(sentence)));
    if (it == by_text_.end()) {
      throw Error(Errc::EmbeddingUnavailable, "no recorded embedding for '" + sentence + "'");
    }
    return it->second;
  }

  std::string provenance() const override { return provenance_; }

 private:
  std::string provenance_;
  std::map<std::string, EmbeddedSentence> by_text_;
};

// ---------------------------------------------------------------------------
// Reports

struct TimingSummary {
  std::size_t samples = 0;
  double mean_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double p95_ms = 0.0;

  nlohmann::json to_json() const {
    return {{"samples", samples}, {"mean_ms", mean_ms}, {"min_ms", min_ms},
            {"max_ms", max_ms},   {"p95_ms", p95_ms}};
  }
};

// Nearest-rank percentile.
inline TimingSummary summarize_timings(std::vector<double> ms) {
  TimingSummary t;
  if (ms.empty()) return t;
  std::sort(ms.begin(), ms.end());
  t.samples = ms.size();
  double sum = 0.0;
  for (double v : ms) sum += v;
  t.mean_ms = sum / static_cast<double>(ms.size());
  t.min_ms = ms.front();
  t.max_ms = ms.back();
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ms.size())));
  t.p95_ms = ms[std::max<std::size_t>(rank, 1) - 1];
  return t;
}

struct ReferenceResult {
  std::size_t sentence_id = 0;
  std::vector<double> scores30;
  std::vector<double> scores50;
  std::array<double, 4> aggregated{};  // per kScenarios column

  const std::vector<double>& scores(SeedFraction f) const {
    return f == SeedFraction::P30 ? scores30 : scores50;
  }
};

struct ScenarioReport {
  MetricKind metric = MetricKind::BertScoreF;
  Aggregate aggregate = Aggregate::Mean;
  std::vector<double> thresholds = default_thresholds();
  std::array<std::vector<std::size_t>, 4> counts;
  std::vector<ReferenceResult> references;
  std::string backend;
  std::string embedding;
  nlohmann::json generation = nullptr;
  std::optional<TimingSummary> timing;

  std::size_t evaluated() const { return references.size(); }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (std::size_t c = 0; c < kScenarios.size(); ++c) {
      cols.push_back({{"scenario", scenario_name(kScenarios[c])},
                      {"seed_fraction", fraction_name(kScenarios[c].seed_fraction)},
                      {"candidate_set", set_name(kScenarios[c].candidate_set)},
                      {"counts", counts[c]}});
    }
    nlohmann::json refs = nlohmann::json::array();
    for (const auto& r : references) {
      refs.push_back({{"sentence_id", r.sentence_id},
                      {"scores_30", r.scores30},
                      {"scores_50", r.scores50},
                      {"aggregated", r.aggregated}});
    }
    return nlohmann::json{
        {"metric", metric_name(metric)},
        {"aggregate", aggregate_name(aggregate)},
        {"thresholds", thresholds},
        {"evaluated_references", evaluated()},
        {"columns", std::move(cols)},
        {"config",
         {{"backend", backend},
          {"embedding", embedding},
          {"generation", generation},
          {"scoring_target", "full reference sentence"},
          {"token_granularity", "as supplied by the embedding provider"}}},
        {"timing", timing ? timing->to_json() : nlohmann::json(nullptr)},
        {"references", std::move(refs)},
    };
  }

  std::string serialize() const { return to_json().dump(2) + "\n"; }

  // Human-readable bucket table: rows are score bins, columns scenarios.
  std::string to_text() const {
    auto label = [&](std::size_t b) {
      char buf[32];
      if (b < thresholds.size()) {
        std::snprintf(buf, sizeof buf, "%.2f", thresholds[b]);
      } else {
        std::snprintf(buf, sizeof buf, "<%.2f", thresholds.back());
      }
      return std::string(buf);
    };
    std::string head = metric == MetricKind::BertScoreF ? "F_BERT" : "Cosine";
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "Metric: %s  aggregate: %s  references: %zu\n",
                  std::string(metric_name(metric)).c_str(), std::string(aggregate_name(aggregate)).c_str(),
                  evaluated());
    out += line;
    std::snprintf(line, sizeof line, "%-10s %-19s %-19s\n", "", "All 5 CC", "Top 2 CC");
    out += line;
    std::snprintf(line, sizeof line, "%-10s %-9s %-9s %-9s %-9s\n", head.c_str(), "30%", "50%", "30%", "50%");
    out += line;
    for (std::size_t b = 0; b <= thresholds.size(); ++b) {
      std::snprintf(line, sizeof line, "%-10s %-9zu %-9zu %-9zu %-9zu\n", label(b).c_str(), counts[0][b],
                    counts[1][b], counts[2][b], counts[3][b]);
      out += line;
    }
    return out;
  }
};

struct EvaluationOptions {
  MetricKind metric = MetricKind::BertScoreF;
  Aggregate aggregate = Aggregate::Mean;
  std::size_t n_return = 5;
  std::vector<double> thresholds = default_thresholds();
  std::optional<std::string> checkpoint_path;  // JSONL, one line per finished reference
  std::function<void(std::size_t finished)> on_progress;
};

namespace detail {

inline double score_pair(MetricKind m, const EmbeddedSentence& ref, const EmbeddedSentence& cand) {
  return m == MetricKind::BertScoreF ? bertscore(ref, cand).f1 : avg_cosine(ref, cand);
}

inline std::map<std::size_t, ReferenceResult> read_checkpoint(const std::string& path, MetricKind metric) {
  std::map<std::size_t, ReferenceResult> done;
  if (!std::filesystem::exists(path)) return done;
  for (const auto& line : text::read_lines(path)) {
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.at("metric") != metric_name(metric)) {
        throw Error(Errc::BadFixture, "checkpoint " + path + " was written for another metric");
      }
      ReferenceResult r;
      r.sentence_id = j.at("sentence_id").get<std::size_t>();
      r.scores30 = j.at("scores_30").get<std::vector<double>>();
      r.scores50 = j.at("scores_50").get<std::vector<double>>();
      done[r.sentence_id] = std::move(r);
    } catch (const nlohmann::json::exception&) {
      // A torn final line from an interrupted run; that reference is redone.
    }
  }
  return done;
}

}  // namespace detail

// Scores every candidate against the full reference sentence, aggregates per
// candidate set and buckets the four scenario columns. Progress is appended
// to the checkpoint file when one is configured, and a rerun skips finished
// references.
inline ScenarioReport run_evaluation(const std::vector<EvalItem>& items, CandidateSource& source,
                                     const EmbeddingProvider& embedder, const EvaluationOptions& opt) {
  std::map<std::size_t, ReferenceResult> done;
  std::ofstream checkpoint;
  if (opt.checkpoint_path) {
    done = detail::read_checkpoint(*opt.checkpoint_path, opt.metric);
    checkpoint.open(*opt.checkpoint_path, std::ios::app);
    if (!checkpoint) throw Error(Errc::Io, "cannot open checkpoint " + *opt.checkpoint_path);
  }

  ScenarioReport report;
  report.metric = opt.metric;
  report.aggregate = opt.aggregate;
  report.thresholds = opt.thresholds;
  report.backend = source.identity();
  report.embedding = embedder.provenance();
  report.generation = source.config();

  std::size_t finished = 0;
  for (const auto& item : items) {
    ReferenceResult r;
    if (auto it = done.find(item.sentence_id); it != done.end()) {
      r = it->second;
    } else {
      try {
        r.sentence_id = item.sentence_id;
        const EmbeddedSentence ref = embedder.embed(item.reference);
        for (SeedFraction f : {SeedFraction::P30, SeedFraction::P50}) {
          auto cands = source.candidates(item, f);
          if (cands.size() != opt.n_return) {
            throw Error(Errc::WrongArity, "sentence " + std::to_string(item.sentence_id) + " has " +
                                              std::to_string(cands.size()) + " candidates");
          }
          auto embedded = embedder.embed_batch(cands);
          auto& scores = f == SeedFraction::P30 ? r.scores30 : r.scores50;
          for (const auto& e : embedded) scores.push_back(detail::score_pair(opt.metric, ref, e));
        }
      } catch (const Error& e) {
        if (e.code() == Errc::BackendUnavailable || e.code() == Errc::EmbeddingUnavailable) {
          throw Error(e.code(), e.detail() + " (" + std::to_string(finished) + "/" +
                                    std::to_string(items.size()) + " references finished" +
                                    (opt.checkpoint_path ? ", checkpoint " + *opt.checkpoint_path : "") +
                                    ")");
        }
        throw;
      }
      if (checkpoint.is_open()) {
        nlohmann::json line{{"metric", metric_name(opt.metric)},
                            {"sentence_id", r.sentence_id},
                            {"scores_30", r.scores30},
                            {"scores_50", r.scores50}};
        checkpoint << line.dump() << "\n" << std::flush;
      }
    }
    for (std::size_t c = 0; c < kScenarios.size(); ++c) {
      r.aggregated[c] = aggregate_reference(r.scores(kScenarios[c].seed_fraction),
                                            kScenarios[c].candidate_set, opt.aggregate, opt.n_return);
    }
    report.references.push_back(std::move(r));
    ++finished;
    if (opt.on_progress) opt.on_progress(finished);
  }

  for (std::size_t c = 0; c < kScenarios.size(); ++c) {
    std::vector<double> col;
    col.reserve(report.references.size());
    for (const auto& r : report.references) col.push_back(r.aggregated[c]);
    report.counts[c] = bucketize(col, opt.thresholds);
  }
  if (auto lat = source.latencies_ms(); !lat.empty()) report.timing = summarize_timings(std::move(lat));
  return report;
}

// ---------------------------------------------------------------------------
// Perplexity report (model / perplexity / execution time)

struct PerplexityRow {
  std::string model;
  double perplexity = 0.0;
  std::optional<double> spread;  // half-range across repeated runs
  std::optional<double> execution_ms;
};

inline PerplexityRow perplexity_row(std::string model, const std::vector<std::vector<ScoredSequence>>& runs,
                                    std::optional<double> execution_ms = std::nullopt) {
  if (runs.empty()) throw Error(Errc::EmptyInput, "no perplexity runs");
  std::vector<double> ppl;
  for (const auto& run : runs) ppl.push_back(corpus_perplexity(run));
  PerplexityRow row;
  row.model = std::move(model);
  double sum = 0.0;
  for (double p : ppl) sum += p;
  row.perplexity = sum / static_cast<double>(ppl.size());
  if (ppl.size() > 1) {
    auto [lo, hi] = std::minmax_element(ppl.begin(), ppl.end());
    row.spread = (*hi - *lo) / 2.0;
  }
  row.execution_ms = execution_ms;
  return row;
}

// Values of 100 and above print without decimals (170±30), smaller ones
// with two (3.45±0.05).
inline std::string format_perplexity_table(const std::vector<PerplexityRow>& rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.model.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  std::string out;
  out += pad("Model", width) + "  " + pad("Perplexity", 14) + "  Execution Time\n";
  out += pad("", width) + "  " + pad("", 14) + "  (milliseconds)\n";
  for (const auto& r : rows) {
    const int decimals = r.perplexity >= 100.0 ? 0 : 2;
    char ppl[64];
    if (r.spread) {
      std::snprintf(ppl, sizeof ppl, "%.*f\xC2\xB1%.*f", decimals, r.perplexity, decimals, *r.spread);
    } else {
      std::snprintf(ppl, sizeof ppl, "%.*f", decimals, r.perplexity);
    }
    char ms[32] = "-";
    if (r.execution_ms) std::snprintf(ms, sizeof ms, "%.2f", *r.execution_ms);
    // The plus-minus sign is two bytes but one column.
    std::size_t ppl_width = r.spread ? 15 : 14;
    out += pad(r.model, width) + "  " + pad(ppl, ppl_width) + "  " + ms + "\n";
  }
  return out;
}

// Recorded logprob items: JSONL of {tokens: [...], logprobs: [...]} as
// returned by /v1/logprobs.
inline std::vector<ScoredSequence> load_recorded_logprobs(const std::string& path) {
  std::vector<ScoredSequence> out;
  for (const auto& line : text::read_lines(path)) {
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ScoredSequence s;
      s.logprobs = j.at("logprobs").get<std::vector<double>>();
      auto toks = j.at("tokens").get<std::vector<std::string>>();
      if (toks.size() != s.logprobs.size() + 1) {
        throw Error(Errc::BadFixture, "tokens must be one longer than logprobs");
      }
      for (double lp : s.logprobs) {
        if (!(lp <= 0.0)) throw Error(Errc::BadFixture, "logprob above zero");
      }
      s.tokens.assign(toks.size(), Vocabulary::kUnk);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BadFixture, path + ": " + e.what());
    }
  }
  return out;
}

// Table manifest: {"rows": [{"model", "runs": [jsonl paths], "execution_ms"?}]}
// with run paths relative to the manifest.
inline std::vector<PerplexityRow> load_perplexity_manifest(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadFixture, path + ": " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  std::vector<PerplexityRow> rows;
  try {
    for (const auto& r : j.at("rows")) {
      std::vector<std::vector<ScoredSequence>> runs;
      for (const auto& run : r.at("runs")) runs.push_back(load_recorded_logprobs((dir / run.get<std::string>()).string()));
      std::optional<double> ms;
      if (r.contains("execution_ms") && !r.at("execution_ms").is_null()) ms = r.at("execution_ms").get<double>();
      rows.push_back(perplexity_row(r.at("model").get<std::string>(), runs, ms));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadFixture, path + ": " + e.what());
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Generation benchmark

struct BenchResult {
  TimingSummary timing;
  std::size_t candidates = 0;
  std::string backend;
  std::string hardware;

  nlohmann::json to_json() const {
    auto j = timing.to_json();
    j["repeats"] = timing.samples;
    j["candidates"] = candidates;
    j["backend"] = backend;
    j["hardware"] = hardware;
    return j;
  }
};

inline std::string hardware_note() {
  std::string note = std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
  std::ifstream cpu("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpu, line)) {
    if (line.rfind("model name", 0) == 0) {
      auto colon = line.find(':');
      if (colon != std::string::npos) note += ", " + std::string(text::trim(line.substr(colon + 1)));
      break;
    }
  }
  return note;
}

// Wall-clock time to produce n_return full candidates, per repeat. Model
// loading is outside the measured region.
inline BenchResult bench_generation(const Backend& backend, std::string_view prefix, GenerationConfig cfg,
                                    std::size_t repeats) {
  if (repeats < 1) throw Error(Errc::InvalidConfig, "repeats must be >= 1");
  std::vector<double> ms;
  std::size_t produced = 0;
  for (std::size_t r = 0; r < repeats; ++r) {
    GenerationConfig c = cfg;
    c.rng_seed = derive_seed(cfg.rng_seed.value_or(0), r);
    auto t0 = std::chrono::steady_clock::now();
    auto cands = complete(backend, prefix, c);
    auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    produced = cands.size();
  }
  return BenchResult{summarize_timings(std::move(ms)), produced, backend.name(), hardware_note()};
}

}  // namespace ccac
