#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "httplib.h"

#include "ccac/backend.hpp"
#include "ccac/error.hpp"
#include "ccac/harness.hpp"
#include "ccac/text.hpp"
#include "ccac/vocab.hpp"

namespace ccac {

// JSON-over-HTTP client shared by the remote backend and embedding provider.
class ProtocolClient {
 public:
  ProtocolClient(const std::string& base_url, Errc failure_code, int timeout_s = 30)
      : url_(base_url), failure_(failure_code), client_(base_url) {
    if (!client_.is_valid()) throw Error(failure_, "invalid backend URL " + base_url);
    client_.set_connection_timeout(timeout_s, 0);
    client_.set_read_timeout(timeout_s, 0);
    client_.set_write_timeout(timeout_s, 0);
  }

  nlohmann::json get(const std::string& path) const {
    std::lock_guard lock(mu_);
    auto res = client_.Get(path);
    return unwrap(res, path);
  }

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    std::lock_guard lock(mu_);
    auto res = client_.Post(path, body.dump(), "application/json");
    return unwrap(res, path);
  }

  const std::string& url() const { return url_; }

 private:
  nlohmann::json unwrap(const httplib::Result& res, const std::string& path) const {
    if (!res) {
      throw Error(failure_, url_ + path + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw Error(failure_, url_ + path + ": HTTP " + std::to_string(res->status) + " " + res->body);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(failure_, url_ + path + ": unparsable body: " + e.what());
    }
  }

  std::string url_;
  Errc failure_;
  mutable std::mutex mu_;
  mutable httplib::Client client_;
};

// Any server implementing /v1/vocab, /v1/next and /v1/logprobs.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(const std::string& base_url) : client_(base_url, Errc::BackendUnavailable) {
    try {
      auto v = client_.get("/v1/vocab");
      vocab_ = Vocabulary(v.at("tokens").get<std::vector<std::string>>());
      auto h = client_.get("/healthz");
      name_ = h.value("backend", std::string("remote"));
      eos_reliable_ = h.value("eos_reliable", true);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BackendUnavailable, base_url + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() == Errc::BadModel) throw Error(Errc::BackendUnavailable, e.detail());
      throw;
    }
  }

  std::string name() const override { return name_ + "@" + client_.url(); }
  const Vocabulary& vocab() const override { return vocab_; }
  bool eos_reliable() const override { return eos_reliable_; }

  std::vector<double> next(std::span<const std::string> context_words) const override {
    nlohmann::json req{{"context_words", std::vector<std::string>(context_words.begin(), context_words.end())}};
    auto res = client_.post("/v1/next", req);
    std::vector<double> dense(vocab_.size(), 0.0);
    try {
      auto ids = res.at("vocab_ids").get<std::vector<std::size_t>>();
      auto probs = res.at("probs").get<std::vector<double>>();
      if (ids.size() != probs.size()) throw Error(Errc::BackendUnavailable, "vocab_ids/probs length mismatch");
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= dense.size()) throw Error(Errc::BackendUnavailable, "vocab id out of range");
        dense[ids[i]] = probs[i];
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BackendUnavailable, std::string("/v1/next: ") + e.what());
    }
    return dense;
  }

  std::vector<ScoredSequence> logprobs(const std::vector<std::vector<std::string>>& sentences) const override {
    std::vector<std::string> texts;
    for (const auto& s : sentences) texts.push_back(text::join(s));
    auto res = client_.post("/v1/logprobs", {{"sentences", texts}});
    std::vector<ScoredSequence> out;
    try {
      for (const auto& item : res.at("items")) {
        ScoredSequence s;
        for (const auto& t : item.at("tokens")) s.tokens.push_back(vocab_.id(t.get<std::string>()));
        s.logprobs = item.at("logprobs").get<std::vector<double>>();
        out.push_back(std::move(s));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BackendUnavailable, std::string("/v1/logprobs: ") + e.what());
    }
    if (out.size() != sentences.size()) throw Error(Errc::BackendUnavailable, "/v1/logprobs: item count mismatch");
    return out;
  }

 private:
  ProtocolClient client_;
  Vocabulary vocab_;
  std::string name_;
  bool eos_reliable_ = true;
};

// Embeddings fetched from /v1/embed.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(const std::string& base_url, std::string mode = "contextual")
      : client_(base_url, Errc::EmbeddingUnavailable), mode_(std::move(mode)) {}

  EmbeddedSentence embed(const std::string& sentence) const override { return embed_batch({sentence}).front(); }

  std::vector<EmbeddedSentence> embed_batch(const std::vector<std::string>& sentences) const override {
    auto res = client_.post("/v1/embed", {{"sentences", sentences}, {"mode", mode_}});
    std::vector<EmbeddedSentence> out;
    try {
      for (const auto& item : res.at("items")) {
        out.emplace_back(item.at("tokens").get<std::vector<std::string>>(),
                         item.at("vectors").get<std::vector<Vec>>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::EmbeddingUnavailable, std::string("/v1/embed: ") + e.what());
    } catch (const Error& e) {
      throw Error(Errc::EmbeddingUnavailable, e.detail());
    }
    if (out.size() != sentences.size()) throw Error(Errc::EmbeddingUnavailable, "/v1/embed: item count mismatch");
    return out;
  }

  std::string provenance() const override { return mode_ + ":" + client_.url(); }

 private:
  ProtocolClient client_;
  std::string mode_;
};

}  // namespace ccac
