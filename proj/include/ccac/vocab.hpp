#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ccac/error.hpp"
#include "ccac/text.hpp"

namespace ccac {

using TokenId = std::uint32_t;

// Word vocabulary. Ids 0..3 are always <sos>, <eos>, <unk>, <pad>.
class Vocabulary {
 public:
  static constexpr TokenId kSos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kPad = 3;
  static constexpr std::size_t kReserved = 4;

  static const std::vector<std::string>& reserved_tokens() {
    static const std::vector<std::string> r{"<sos>", "<eos>", "<unk>", "<pad>"};
    return r;
  }

  Vocabulary() {
    for (const auto& t : reserved_tokens()) push(t);
  }

  // Rebuilds from a serialized token list; the reserved prefix is mandatory.
  explicit Vocabulary(const std::vector<std::string>& tokens) {
    if (tokens.size() < kReserved) throw Error(Errc::BadModel, "vocabulary lacks reserved tokens");
    for (std::size_t i = 0; i < kReserved; ++i) {
      if (tokens[i] != reserved_tokens()[i]) {
        throw Error(Errc::BadModel, "reserved token " + std::to_string(i) + " is '" + tokens[i] + "'");
      }
    }
    for (const auto& t : tokens) {
      if (index_.count(t)) throw Error(Errc::BadModel, "duplicate vocabulary token '" + t + "'");
      push(t);
    }
  }

  TokenId add(const std::string& word) {
    if (auto it = index_.find(word); it != index_.end()) return it->second;
    return push(word);
  }

  std::optional<TokenId> find(std::string_view word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId id(std::string_view word) const { return find(word).value_or(kUnk); }

  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t word_count() const { return tokens_.size() - kReserved; }

  // Tokens the model may emit: everything except <sos> and <pad>.
  static bool predictable(TokenId id) { return id != kSos && id != kPad; }

  std::string hash() const {
    std::uint64_t h = text::fnv1a64("ccac-vocab");
    for (const auto& t : tokens_) {
      h = text::fnv1a64(t, h);
      h = text::fnv1a64("\n", h);
    }
    return text::hex64(h);
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  TokenId push(const std::string& t) {
    auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(t);
    index_.emplace(t, id);
    return id;
  }

  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> index_;
};

}  // namespace ccac
