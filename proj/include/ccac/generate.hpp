#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccac/backend.hpp"
#include "ccac/error.hpp"
#include "ccac/preprocess.hpp"
#include "ccac/rng.hpp"
#include "ccac/text.hpp"

namespace ccac {

struct GenerationConfig {
  std::size_t n_return = 5;
  bool do_sample = true;
  double temperature = 1.0;
  std::optional<std::size_t> top_k = 50;
  std::optional<double> top_p = 0.95;
  std::size_t max_new_words = 5;
  std::size_t max_len = kDefaultMaxLen;
  std::optional<std::uint64_t> rng_seed;

  void validate() const {
    if (n_return < 1) throw Error(Errc::InvalidConfig, "n_return must be >= 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw Error(Errc::InvalidConfig, "temperature must be > 0");
    }
    if (top_k && *top_k < 1) throw Error(Errc::InvalidConfig, "top_k must be >= 1");
    if (top_p && !(*top_p > 0.0 && *top_p <= 1.0)) {
      throw Error(Errc::InvalidConfig, "top_p must lie in (0,1]");
    }
    if (max_new_words < 1) throw Error(Errc::InvalidConfig, "max_new_words must be >= 1");
    if (max_len < 3) throw Error(Errc::InvalidConfig, "max_len must be >= 3");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"n_return", n_return},       {"do_sample", do_sample},
                     {"temperature", temperature}, {"max_new_words", max_new_words},
                     {"max_len", max_len}};
    j["top_k"] = top_k ? nlohmann::json(*top_k) : nlohmann::json(nullptr);
    j["top_p"] = top_p ? nlohmann::json(*top_p) : nlohmann::json(nullptr);
    j["rng_seed"] = rng_seed ? nlohmann::json(*rng_seed) : nlohmann::json(nullptr);
    return j;
  }
};

enum class StopReason { Eos, WordBudget, MaxLen };

constexpr std::string_view stop_name(StopReason s) {
  switch (s) {
    case StopReason::Eos: return "eos";
    case StopReason::WordBudget: return "word_budget";
    case StopReason::MaxLen: return "max_len";
  }
  return "eos";
}

struct Candidate {
  std::string full_text;
  std::vector<std::string> completion_words;
  std::vector<double> token_logprobs;
  double total_logprob = 0.0;
  StopReason stop = StopReason::Eos;

  std::string completion() const { return text::join(completion_words); }
};

// ---------------------------------------------------------------------------
// Distribution filters. Ties are broken by ascending token id everywhere.

namespace detail {

inline void renormalize(std::vector<double>& p) {
  double s = 0.0;
  for (double v : p) s += v;
  if (s > 0.0) {
    for (double& v : p) v /= s;
  }
}

// Ids of non-zero entries, most probable first.
inline std::vector<std::size_t> ranked_support(const std::vector<double>& p) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) ids.push_back(i);
  }
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    return p[a] != p[b] ? p[a] > p[b] : a < b;
  });
  return ids;
}

}  // namespace detail

// p_i^(1/T), renormalized. Computed relative to the maximum so small T does
// not underflow to an all-zero vector.
inline std::vector<double> apply_temperature(const std::vector<double>& dist, double temperature) {
  if (!(temperature > 0.0)) throw Error(Errc::InvalidConfig, "temperature must be > 0");
  if (temperature == 1.0) return dist;
  double peak = 0.0;
  for (double v : dist) peak = std::max(peak, v);
  std::vector<double> out(dist.size(), 0.0);
  if (peak <= 0.0) return out;
  const double log_peak = std::log(peak);
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] > 0.0) out[i] = std::exp((std::log(dist[i]) - log_peak) / temperature);
  }
  detail::renormalize(out);
  return out;
}

inline std::vector<double> filter_top_k(const std::vector<double>& dist, std::size_t k) {
  if (k < 1) throw Error(Errc::InvalidConfig, "top_k must be >= 1");
  if (k >= dist.size()) return dist;
  std::vector<std::size_t> ids(dist.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    return dist[a] != dist[b] ? dist[a] > dist[b] : a < b;
  };
  std::nth_element(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k - 1), ids.end(), before);
  const std::size_t kth = ids[k - 1];
  std::vector<double> out(dist.size(), 0.0);
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (i == kth || before(i, kth)) out[i] = dist[i];
  }
  detail::renormalize(out);
  return out;
}

inline std::vector<double> filter_top_p(const std::vector<double>& dist, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(Errc::InvalidConfig, "top_p must lie in (0,1]");
  if (p >= 1.0) return dist;
  auto ranked = detail::ranked_support(dist);
  std::vector<double> out(dist.size(), 0.0);
  double cum = 0.0;
  for (std::size_t id : ranked) {
    out[id] = dist[id];
    cum += dist[id];
    if (cum >= p) break;
  }
  detail::renormalize(out);
  return out;
}

// Temperature, then top-k, then top-p.
inline std::vector<double> apply_filters(const std::vector<double>& dist, const GenerationConfig& cfg) {
  std::vector<double> p = apply_temperature(dist, cfg.temperature);
  if (cfg.top_k) p = filter_top_k(p, *cfg.top_k);
  if (cfg.top_p) p = filter_top_p(p, *cfg.top_p);
  return p;
}

inline std::size_t argmax(const std::vector<double>& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

// Inverse-CDF draw in ascending id order.
inline std::size_t sample_index(const std::vector<double>& p, Rng& rng) {
  double total = 0.0;
  for (double v : p) total += v;
  const double u = rng.uniform() * total;
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    cum += p[i];
    last = i;
    if (u < cum) return i;
  }
  return last;
}

// ---------------------------------------------------------------------------
// Decoding

inline std::string append_words(std::string_view prefix, const std::vector<std::string>& words) {
  std::string out(prefix);
  if (words.empty()) return out;
  if (!out.empty() && !text::is_space(out.back())) out += ' ';
  out += text::join(words);
  return out;
}

// n_return independent rollouts from `prefix`. Rollout i draws from its own
// stream derive_seed(rng_seed, i). Result is sorted by total_logprob,
// descending, stable in rollout index.
inline std::vector<Candidate> complete(const Backend& backend, std::string_view prefix,
                                       const GenerationConfig& cfg) {
  cfg.validate();
  const std::vector<std::string> prefix_words = tokenize_words(prefix);
  if (prefix_words.empty()) throw Error(Errc::EmptyPrefix, "prefix has no words");

  const Vocabulary& vocab = backend.vocab();
  const std::size_t word_cap = cfg.max_len - 2;  // room for <sos> and <eos>
  std::map<std::vector<std::string>, std::vector<double>> cache;
  auto dist_for = [&](const std::vector<std::string>& ctx) -> const std::vector<double>& {
    auto it = cache.find(ctx);
    if (it != cache.end()) return it->second;
    auto d = backend.next(ctx);
    if (d.size() != vocab.size()) {
      throw Error(Errc::BackendUnavailable, "backend returned " + std::to_string(d.size()) +
                                                " probabilities for a vocabulary of " +
                                                std::to_string(vocab.size()));
    }
    return cache.emplace(ctx, std::move(d)).first->second;
  };

  std::vector<Candidate> out;
  out.reserve(cfg.n_return);
  for (std::size_t r = 0; r < cfg.n_return; ++r) {
    Rng rng(derive_seed(cfg.rng_seed.value_or(0), r));
    Candidate cand;
    std::vector<std::string> ctx = prefix_words;
    while (true) {
      if (ctx.size() >= word_cap) {
        cand.stop = StopReason::MaxLen;
        break;
      }
      const std::vector<double>& model = dist_for(ctx);
      std::vector<double> choice = model;
      choice[Vocabulary::kSos] = 0.0;
      choice[Vocabulary::kPad] = 0.0;
      choice[Vocabulary::kUnk] = 0.0;
      if (!backend.eos_reliable()) choice[Vocabulary::kEos] = 0.0;
      detail::renormalize(choice);
      choice = apply_filters(choice, cfg);
      double mass = 0.0;
      for (double v : choice) mass += v;
      const std::size_t pick = mass > 0.0
                                   ? (cfg.do_sample ? sample_index(choice, rng) : argmax(choice))
                                   : static_cast<std::size_t>(Vocabulary::kEos);
      const double lp = std::log(model[pick]);
      cand.token_logprobs.push_back(lp);
      cand.total_logprob += lp;
      if (pick == Vocabulary::kEos) {
        cand.stop = StopReason::Eos;
        break;
      }
      const std::string& word = vocab.token(static_cast<TokenId>(pick));
      cand.completion_words.push_back(word);
      ctx.push_back(word);
      if (cand.completion_words.size() >= cfg.max_new_words) {
        cand.stop = StopReason::WordBudget;
        break;
      }
    }
    cand.full_text = append_words(prefix, cand.completion_words);
    out.push_back(std::move(cand));
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    return a.total_logprob > b.total_logprob;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Few-shot prompt document (assembled only; never sent anywhere)

inline constexpr std::size_t kMinFewShotExamples = 10;

inline const std::string& default_fewshot_instruction() {
  static const std::string s =
      "You assist emergency department triage nurses. Given the beginning of a chief complaint, "
      "continue it in the same terse clinical style as the examples. Use standard abbreviations, "
      "do not invent history that is not implied, and stop at the end of the sentence.";
  return s;
}

struct PromptDocument {
  std::string instruction;
  std::vector<std::string> examples;
  double temperature = 0.7;
  int n = 5;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"instruction", instruction},
                          {"examples", examples},
                          {"settings", {{"temperature", temperature}, {"n", n}}},
                          {"seed", seed}};
  }
};

inline PromptDocument build_fewshot_prompt(const std::vector<std::string>& examples,
                                           const std::string& instruction, std::size_t k,
                                           std::uint64_t seed) {
  if (k < kMinFewShotExamples) {
    throw Error(Errc::TooFewExamples, "k=" + std::to_string(k) + " is below the minimum of " +
                                          std::to_string(kMinFewShotExamples));
  }
  if (k > examples.size()) {
    throw Error(Errc::TooFewExamples, "k=" + std::to_string(k) + " exceeds the " +
                                          std::to_string(examples.size()) + " available examples");
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  PromptDocument doc;
  doc.instruction = instruction;
  doc.seed = seed;
  for (std::size_t i = 0; i < k; ++i) doc.examples.push_back(examples[order[i]]);
  return doc;
}

}  // namespace ccac
