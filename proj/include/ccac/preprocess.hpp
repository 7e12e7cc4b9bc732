#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccac/corpus.hpp"
#include "ccac/error.hpp"
#include "ccac/rng.hpp"
#include "ccac/text.hpp"
#include "ccac/vocab.hpp"

namespace ccac {

inline constexpr std::size_t kMinSentenceWords = 4;
inline constexpr std::size_t kDefaultMaxLen = 74;

// ---------------------------------------------------------------------------
// History split

inline const std::vector<std::string>& default_history_markers() {
  static const std::vector<std::string> m{"PMH", "PMHX", "HX", "PSHX", "SHX", "FHX"};
  return m;
}

struct SplitCC {
  std::string complaint;
  std::string separator;  // whitespace between complaint and history
  std::optional<std::string> history;
  std::optional<std::string> marker;  // configured spelling of the matched marker

  std::string reconstruct() const { return complaint + separator + history.value_or(""); }
};

// Splits at the first case-insensitive, word-bounded occurrence of any marker.
// "PMHx:" and "PMH-" both count; "PMHX" never matches as "PMH" + "X".
inline SplitCC split_history(std::string_view cc,
                             const std::vector<std::string>& markers = default_history_markers()) {
  std::vector<std::string> by_len = markers;
  std::stable_sort(by_len.begin(), by_len.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  const std::string low = text::lower(cc);
  for (std::size_t pos = 0; pos < low.size(); ++pos) {
    if (pos > 0 && text::is_alnum(low[pos - 1])) continue;
    for (const auto& m : by_len) {
      const std::string lm = text::lower(m);
      if (low.compare(pos, lm.size(), lm) != 0) continue;
      const std::size_t end = pos + lm.size();
      if (end < low.size() && text::is_alnum(low[end])) continue;
      SplitCC out;
      std::size_t cut = pos;
      while (cut > 0 && text::is_space(cc[cut - 1])) --cut;
      out.complaint.assign(cc.substr(0, cut));
      out.separator.assign(cc.substr(cut, pos - cut));
      out.history.emplace(cc.substr(pos));
      out.marker = m;
      return out;
    }
  }
  return SplitCC{std::string(cc), "", std::nullopt, std::nullopt};
}

// ---------------------------------------------------------------------------
// Sentence segmentation

struct SegmenterRules {
  std::set<std::string, std::less<>> abbreviations{"pt", "dr", "mr", "mrs", "approx",
                                                   "abd", "fx", "hx", "s/p"};
};

namespace detail {

// Bitmap of byte offsets covered by a placeholder span.
inline std::vector<bool> placeholder_mask(std::string_view s) {
  std::vector<bool> mask(s.size(), false);
  for (const auto& p : scan_placeholders(s)) {
    for (std::size_t k = p.offset; k < p.end(); ++k) mask[k] = true;
  }
  return mask;
}

inline bool is_opening_punct(char c) {
  return c == '"' || c == '\'' || c == '(' || c == '[' || c == '{' || c == '`';
}

}  // namespace detail

// Rule-based splitter on . ; ! ? and newline. A period does not end a sentence
// inside a placeholder, between two digits, or after a single letter or a
// listed abbreviation.
inline std::vector<std::string> segment_sentences(std::string_view s,
                                                  const SegmenterRules& rules = {}) {
  const auto in_placeholder = detail::placeholder_mask(s);
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    std::string_view seg = text::trim(s.substr(start, end - start));
    if (!seg.empty()) out.emplace_back(seg);
    start = end + 1;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_placeholder[i]) continue;
    if (c == ';' || c == '!' || c == '?' || c == '\n') {
      emit(i);
      continue;
    }
    if (c != '.') continue;
    if (i > 0 && i + 1 < s.size() && text::is_digit(s[i - 1]) && text::is_digit(s[i + 1])) {
      continue;
    }
    std::size_t b = i;
    while (b > start && !text::is_space(s[b - 1])) --b;
    std::string_view tok = s.substr(b, i - b);
    while (!tok.empty() && detail::is_opening_punct(tok.front())) tok.remove_prefix(1);
    if (tok.size() == 1 && text::is_alpha(tok[0])) continue;
    if (!tok.empty() && rules.abbreviations.count(text::lower(tok))) continue;
    emit(i);
  }
  emit(s.size());
  return out;
}

// ---------------------------------------------------------------------------
// Words

namespace detail {

// Length of a detachable punctuation mark ending at / starting at a position,
// 0 when none. Covers ASCII marks and typographic quotes.
inline std::size_t punct_len_front(std::string_view w) {
  static constexpr std::string_view ascii = ".,;:!?\"'()[]{}*-_~`";
  if (w.empty()) return 0;
  if (ascii.find(w.front()) != std::string_view::npos) return 1;
  for (std::string_view q : {"\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x98", "\xE2\x80\x99"}) {
    if (w.substr(0, q.size()) == q) return q.size();
  }
  return 0;
}

inline std::size_t punct_len_back(std::string_view w) {
  static constexpr std::string_view ascii = ".,;:!?\"'()[]{}*-_~`";
  if (w.empty()) return 0;
  if (ascii.find(w.back()) != std::string_view::npos) return 1;
  for (std::string_view q : {"\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x98", "\xE2\x80\x99"}) {
    if (w.size() >= q.size() && w.substr(w.size() - q.size()) == q) return q.size();
  }
  return 0;
}

}  // namespace detail

// Whitespace tokens with leading/trailing punctuation detached and dropped.
// Placeholders are atomic even when they contain spaces; word-internal marks
// (s/p, 101.4, can't) are kept.
inline std::vector<std::string> tokenize_words(std::string_view s) {
  const auto in_placeholder = detail::placeholder_mask(s);
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && text::is_space(s[i]) && !in_placeholder[i]) ++i;
    std::size_t b = i;
    while (i < s.size() && (in_placeholder[i] || !text::is_space(s[i]))) ++i;
    std::size_t e = i;
    while (b < e && !in_placeholder[b]) {
      std::size_t n = detail::punct_len_front(s.substr(b, e - b));
      if (n == 0) break;
      b += n;
    }
    while (e > b && !in_placeholder[e - 1]) {
      std::size_t n = detail::punct_len_back(s.substr(b, e - b));
      if (n == 0) break;
      e -= n;
    }
    if (e > b) words.emplace_back(s.substr(b, e - b));
  }
  return words;
}

struct Sentence {
  std::size_t id = 0;         // position in the filtered sentence list
  std::size_t source_id = 0;  // CCRecord id
  std::vector<std::string> words;

  std::size_t word_count() const { return words.size(); }
  std::string text() const { return text::join(words); }
};

struct RawSentence {
  std::size_t source_id = 0;
  std::string text;
};

struct FilterResult {
  std::vector<Sentence> kept;
  std::size_t discarded = 0;
};

// Keeps sentences of at least four words; ids are assigned densely in order.
inline FilterResult filter_short(const std::vector<RawSentence>& raw) {
  FilterResult r;
  for (const auto& s : raw) {
    auto words = tokenize_words(s.text);
    if (words.size() < kMinSentenceWords) {
      ++r.discarded;
      continue;
    }
    r.kept.push_back(Sentence{r.kept.size(), s.source_id, std::move(words)});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Split, seeds, vocabulary, encoding

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t shuffle_seed = 0;
};

inline DatasetSplit split_dataset(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw Error(Errc::TooFewSentences, "need at least 10 sentences, got " + std::to_string(n));
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  Rng rng(seed);
  rng.shuffle(ids);
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  DatasetSplit out;
  out.shuffle_seed = seed;
  out.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                 ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return out;
}

inline DatasetSplit split_dataset(const std::vector<Sentence>& sentences, std::uint64_t seed) {
  return split_dataset(sentences.size(), seed);
}

struct SeedPair {
  std::size_t sentence_id = 0;
  std::size_t len30 = 0;
  std::size_t len50 = 0;
  std::vector<std::string> seed30;
  std::vector<std::string> seed50;
};

// round_half_even(num * w / den), exact in integers.
inline std::size_t round_fraction_half_even(std::size_t w, std::size_t num, std::size_t den) {
  const std::size_t prod = num * w;
  std::size_t q = prod / den;
  const std::size_t r2 = 2 * (prod % den);
  if (r2 > den || (r2 == den && (q % 2 == 1))) ++q;
  return q;
}

inline std::size_t seed_length(std::size_t words, std::size_t percent) {
  std::size_t len = round_fraction_half_even(words, percent, 100);
  return std::clamp<std::size_t>(len, 1, words - 1);
}

inline SeedPair make_seeds(const Sentence& s) {
  if (s.word_count() < 2) throw Error(Errc::InvalidConfig, "seed needs at least two words");
  SeedPair p;
  p.sentence_id = s.id;
  p.len30 = seed_length(s.word_count(), 30);
  p.len50 = seed_length(s.word_count(), 50);
  p.seed30.assign(s.words.begin(), s.words.begin() + static_cast<std::ptrdiff_t>(p.len30));
  p.seed50.assign(s.words.begin(), s.words.begin() + static_cast<std::ptrdiff_t>(p.len50));
  return p;
}

// Word types with frequency >= min_count, most frequent first, ties by bytes.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences,
                              std::size_t min_count = 1) {
  if (sentences.empty()) throw Error(Errc::EmptyCorpus, "no training sentences");
  if (min_count < 1) throw Error(Errc::InvalidConfig, "min_count must be >= 1");
  std::map<std::string, std::size_t, std::less<>> freq;
  for (const auto& s : sentences) {
    for (const auto& w : s) ++freq[w];
  }
  std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [w, c] : items) {
    if (c >= min_count) v.add(w);
  }
  return v;
}

inline Vocabulary build_vocab(const std::vector<Sentence>& sentences, std::size_t min_count = 1) {
  std::vector<std::vector<std::string>> words;
  words.reserve(sentences.size());
  for (const auto& s : sentences) words.push_back(s.words);
  return build_vocab(words, min_count);
}

inline std::vector<TokenId> encode(const std::vector<std::string>& words, const Vocabulary& vocab,
                                   std::size_t max_len = kDefaultMaxLen) {
  if (words.size() + 2 > max_len) {
    throw Error(Errc::SentenceTooLong, std::to_string(words.size()) + " words exceed max_len " +
                                           std::to_string(max_len));
  }
  std::vector<TokenId> ids;
  ids.reserve(max_len);
  ids.push_back(Vocabulary::kSos);
  for (const auto& w : words) ids.push_back(vocab.id(w));
  ids.push_back(Vocabulary::kEos);
  ids.resize(max_len, Vocabulary::kPad);
  return ids;
}

inline std::vector<std::string> decode(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  std::vector<std::string> words;
  for (TokenId id : ids) {
    if (id == Vocabulary::kSos || id == Vocabulary::kPad) continue;
    if (id == Vocabulary::kEos) break;
    words.push_back(vocab.token(id));
  }
  return words;
}

// ---------------------------------------------------------------------------
// Whole pipeline

struct PreprocessOptions {
  std::uint64_t seed = 0;
  std::size_t min_count = 1;
  std::vector<std::string> history_markers = default_history_markers();
  SegmenterRules segmenter;
};

struct PreprocessResult {
  std::vector<Sentence> sentences;
  DatasetSplit split;
  std::vector<SeedPair> seeds;  // one per test sentence, in test order
  Vocabulary vocab;
  std::size_t records = 0;
  std::size_t history_splits = 0;
  std::size_t raw_sentences = 0;
  std::size_t discarded_short = 0;
  std::size_t min_count = 1;

  double median_words(const std::vector<std::size_t>& ids) const {
    if (ids.empty()) return 0.0;
    std::vector<std::size_t> w;
    w.reserve(ids.size());
    for (auto id : ids) w.push_back(sentences[id].word_count());
    std::sort(w.begin(), w.end());
    const std::size_t m = w.size() / 2;
    if (w.size() % 2) return static_cast<double>(w[m]);
    return (static_cast<double>(w[m - 1]) + static_cast<double>(w[m])) / 2.0;
  }

  std::vector<std::vector<std::string>> words_of(const std::vector<std::size_t>& ids) const {
    std::vector<std::vector<std::string>> out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(sentences[id].words);
    return out;
  }

  nlohmann::json manifest() const {
    std::vector<std::size_t> all(sentences.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return nlohmann::json{
        {"seed", split.shuffle_seed},
        {"min_count", min_count},
        {"records", records},
        {"history_splits", history_splits},
        {"raw_sentences", raw_sentences},
        {"discarded_short", discarded_short},
        {"sentences", sentences.size()},
        {"train", split.train.size()},
        {"val", split.val.size()},
        {"test", split.test.size()},
        {"median_words_train", median_words(split.train)},
        {"median_words_all", median_words(all)},
        {"vocab_size", vocab.word_count()},
        {"vocab_tokens", vocab.size()},
    };
  }
};

inline std::vector<RawSentence> extract_sentences(const std::vector<CCRecord>& records,
                                                  const PreprocessOptions& opt,
                                                  std::size_t* history_splits = nullptr) {
  std::vector<RawSentence> raw;
  for (const auto& r : records) {
    SplitCC parts = split_history(r.text, opt.history_markers);
    if (parts.history && history_splits) ++*history_splits;
    for (auto& seg : segment_sentences(parts.complaint, opt.segmenter)) {
      raw.push_back(RawSentence{r.id, std::move(seg)});
    }
  }
  return raw;
}

inline PreprocessResult preprocess(const std::vector<CCRecord>& records, const PreprocessOptions& opt) {
  PreprocessResult out;
  out.records = records.size();
  out.min_count = opt.min_count;
  auto raw = extract_sentences(records, opt, &out.history_splits);
  out.raw_sentences = raw.size();
  auto filtered = filter_short(raw);
  out.sentences = std::move(filtered.kept);
  out.discarded_short = filtered.discarded;
  out.split = split_dataset(out.sentences, opt.seed);
  out.vocab = build_vocab(out.words_of(out.split.train), opt.min_count);
  for (auto id : out.split.test) out.seeds.push_back(make_seeds(out.sentences[id]));
  return out;
}

inline void write_artifacts(const PreprocessResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto lines_of = [&](const std::vector<std::size_t>& ids) {
    std::string body;
    for (auto id : ids) body += r.sentences[id].text() + "\n";
    return body;
  };
  text::write_file((dir / "train.txt").string(), lines_of(r.split.train));
  text::write_file((dir / "val.txt").string(), lines_of(r.split.val));
  text::write_file((dir / "test.txt").string(), lines_of(r.split.test));

  std::string seeds = "sentence_id\tlen30\tseed30\tlen50\tseed50\n";
  for (const auto& p : r.seeds) {
    seeds += std::to_string(p.sentence_id) + "\t" + std::to_string(p.len30) + "\t" +
             text::join(p.seed30) + "\t" + std::to_string(p.len50) + "\t" + text::join(p.seed50) + "\n";
  }
  text::write_file((dir / "seeds.tsv").string(), seeds);

  std::string vocab;
  for (const auto& t : r.vocab.tokens()) vocab += t + "\n";
  text::write_file((dir / "vocab.txt").string(), vocab);
  text::write_file((dir / "manifest.json").string(), r.manifest().dump(2) + "\n");
}

// One sentence per line, words separated by single spaces.
inline std::vector<std::vector<std::string>> read_sentence_file(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : text::read_lines(path)) {
    auto words = tokenize_words(line);
    if (!words.empty()) out.push_back(std::move(words));
  }
  return out;
}

inline Vocabulary read_vocab_file(const std::string& path) {
  return Vocabulary(text::read_lines(path));
}

}  // namespace ccac
