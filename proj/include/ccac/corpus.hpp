#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccac/error.hpp"
#include "ccac/text.hpp"

namespace ccac {

// Predict / Consensus annotation. Parsed and carried, never interpreted.
enum class Flag { Y, N, U, Unmarked };

inline Flag parse_flag(std::string_view raw, std::size_t row) {
  std::string_view v = text::trim(raw);
  if (v == "Y") return Flag::Y;
  if (v == "N") return Flag::N;
  if (v == "U") return Flag::U;
  if (v == "-") return Flag::Unmarked;
  throw Error(Errc::BadFlag, "row " + std::to_string(row) + ": flag '" + std::string(v) + "'");
}

constexpr std::string_view flag_symbol(Flag f) {
  switch (f) {
    case Flag::Y: return "Y";
    case Flag::N: return "N";
    case Flag::U: return "U";
    case Flag::Unmarked: return "-";
  }
  return "-";
}

struct CCRecord {
  std::size_t id = 0;  // data-row index in the source file
  std::string text;
  Flag predict = Flag::Unmarked;
  Flag consensus = Flag::Unmarked;

  bool operator==(const CCRecord&) const = default;
};

enum class PlaceholderKind { Time, Date, Hospital, Other };

struct PlaceholderToken {
  PlaceholderKind kind = PlaceholderKind::Other;
  std::string name;     // trimmed NAME, e.g. "TIME"
  std::string surface;  // exact bytes including the << >> delimiters
  std::size_t offset = 0;

  std::size_t end() const { return offset + surface.size(); }
  bool operator==(const PlaceholderToken&) const = default;
};

namespace detail {

inline bool valid_placeholder_name(std::string_view name) {
  if (text::trim(name).empty()) return false;
  for (char c : name) {
    if (!(text::is_alnum(c) || c == '_' || c == ' ')) return false;
  }
  return true;
}

inline PlaceholderKind classify_placeholder(std::string_view name) {
  std::string upper(name);
  for (auto& c : upper) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  if (upper == "TIME") return PlaceholderKind::Time;
  if (upper == "DATE") return PlaceholderKind::Date;
  if (upper == "HOSPITAL") return PlaceholderKind::Hospital;
  return PlaceholderKind::Other;
}

}  // namespace detail

// Every non-overlapping <<NAME>> span, left to right. NAME is letters, digits,
// '_' and inner spaces (exports sometimes write "<<DATE >>"). An unclosed or
// malformed "<<" is literal text.
inline std::vector<PlaceholderToken> scan_placeholders(std::string_view s) {
  std::vector<PlaceholderToken> out;
  std::size_t i = 0;
  while (i + 1 < s.size()) {
    if (s[i] != '<' || s[i + 1] != '<') {
      ++i;
      continue;
    }
    std::size_t close = s.find(">>", i + 2);
    if (close == std::string_view::npos) break;
    std::string_view name = s.substr(i + 2, close - i - 2);
    if (!detail::valid_placeholder_name(name)) {
      ++i;
      continue;
    }
    std::string trimmed(text::trim(name));
    out.push_back(PlaceholderToken{detail::classify_placeholder(trimmed), trimmed,
                                   std::string(s.substr(i, close + 2 - i)), i});
    i = close + 2;
  }
  return out;
}

enum class CorpusFormat { Tsv, Csv };

inline CorpusFormat format_from_path(std::string_view path) {
  std::string p = text::lower(path);
  if (p.size() >= 4 && p.substr(p.size() - 4) == ".csv") return CorpusFormat::Csv;
  return CorpusFormat::Tsv;
}

namespace detail {

// Delimited-text reader with RFC 4180 quoting. A field that opens with a quote
// but is not a well-formed quoted field (free text such as `"sob" since am`)
// is re-read verbatim up to the next delimiter.
inline std::vector<std::vector<std::string>> read_delimited(std::string_view s, char delim) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::size_t i = 0;
  const std::size_t n = s.size();
  auto end_of_field = [&](std::size_t k) {
    return k >= n || s[k] == delim || s[k] == '\n' || s[k] == '\r';
  };
  auto finish_line = [&](std::size_t& k) {
    if (k < n && s[k] == '\r') ++k;
    if (k < n && s[k] == '\n') ++k;
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < n) {
    std::string field;
    std::size_t start = i;
    bool quoted_ok = false;
    if (s[i] == '"') {
      std::size_t k = i + 1;
      std::string acc;
      while (k < n) {
        if (s[k] == '"') {
          if (k + 1 < n && s[k + 1] == '"') {
            acc += '"';
            k += 2;
            continue;
          }
          break;
        }
        acc += s[k++];
      }
      if (k < n && end_of_field(k + 1)) {
        field = std::move(acc);
        i = k + 1;
        quoted_ok = true;
      }
    }
    if (!quoted_ok) {
      i = start;
      while (!end_of_field(i)) ++i;
      field.assign(s.substr(start, i - start));
    }
    row.push_back(std::move(field));
    if (i < n && s[i] == delim) {
      ++i;
      if (i == n) row.emplace_back();
      continue;
    }
    finish_line(i);
  }
  if (!row.empty()) rows.push_back(std::move(row));
  return rows;
}

inline bool needs_quoting(std::string_view field, char delim) {
  if (field.empty()) return false;
  if (field.front() == '"') return true;
  return field.find_first_of(std::string{delim, '"', '\n', '\r'}) != std::string_view::npos;
}

inline std::string quote_field(std::string_view field, char delim) {
  if (!needs_quoting(field, delim)) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

struct CorpusLoad {
  std::vector<CCRecord> records;
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;
  std::map<std::string, std::size_t> placeholder_counts;

  nlohmann::json manifest() const {
    return nlohmann::json{{"rows_read", rows_read},
                          {"rows_dropped", rows_dropped},
                          {"placeholder_counts", placeholder_counts}};
  }
};

inline CorpusLoad parse_corpus(std::string_view content, CorpusFormat format) {
  if (std::size_t bad = text::find_invalid_utf8(content); bad != std::string_view::npos) {
    throw Error(Errc::EncodingError, "invalid UTF-8 at byte " + std::to_string(bad));
  }
  if (content.substr(0, 3) == "\xEF\xBB\xBF") content.remove_prefix(3);

  const char delim = format == CorpusFormat::Csv ? ',' : '\t';
  auto rows = detail::read_delimited(content, delim);
  if (rows.empty()) throw Error(Errc::MissingColumn, "no header row");

  std::optional<std::size_t> cc_col, predict_col, consensus_col;
  const auto& header = rows.front();
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::string h = text::lower(text::trim(header[c]));
    if (!cc_col && h.find("chief complaint") != std::string::npos) cc_col = c;
    else if (!predict_col && h.find("predict") != std::string::npos) predict_col = c;
    else if (!consensus_col && h.find("consensus") != std::string::npos) consensus_col = c;
  }
  std::string missing;
  if (!cc_col) missing += " chief complaint";
  if (!predict_col) missing += " predict";
  if (!consensus_col) missing += " consensus";
  if (!missing.empty()) throw Error(Errc::MissingColumn, "header lacks:" + missing);

  CorpusLoad load;
  std::size_t data_row = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    auto cell = [&](std::size_t c) -> std::string_view {
      return c < row.size() ? std::string_view(row[c]) : std::string_view();
    };
    const std::size_t id = data_row++;
    ++load.rows_read;
    Flag predict = parse_flag(cell(*predict_col), id);
    Flag consensus = parse_flag(cell(*consensus_col), id);
    std::string_view body = cell(*cc_col);
    if (text::trim(body).empty()) {
      ++load.rows_dropped;
      continue;
    }
    for (const auto& p : scan_placeholders(body)) ++load.placeholder_counts[p.name];
    load.records.push_back(CCRecord{id, std::string(body), predict, consensus});
  }
  return load;
}

inline CorpusLoad load_corpus(const std::string& path, CorpusFormat format) {
  return parse_corpus(text::read_file(path), format);
}

inline CorpusLoad load_corpus(const std::string& path) {
  return load_corpus(path, format_from_path(path));
}

inline std::string serialize_corpus(const std::vector<CCRecord>& records, CorpusFormat format) {
  const char delim = format == CorpusFormat::Csv ? ',' : '\t';
  std::string out = "Chief Complaint";
  out += delim;
  out += "Predict";
  out += delim;
  out += "Consensus\n";
  for (const auto& r : records) {
    out += detail::quote_field(r.text, delim);
    out += delim;
    out += flag_symbol(r.predict);
    out += delim;
    out += flag_symbol(r.consensus);
    out += '\n';
  }
  return out;
}

}  // namespace ccac
