#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "httplib.h"

#include "ccac/backend.hpp"
#include "ccac/error.hpp"
#include "ccac/generate.hpp"
#include "ccac/harness.hpp"
#include "ccac/http_backend.hpp"
#include "ccac/metrics.hpp"
#include "ccac/schema.hpp"
#include "ccac/schemas.hpp"

namespace ccac::service {

using nlohmann::json;

struct Reply {
  int status = 200;
  json body;
};

inline Reply error_reply(int status, std::string_view code, const std::string& message) {
  return Reply{status, json{{"error", code}, {"message", message}}};
}

inline const schema::Validator& validator(const std::string& name) {
  static const std::map<std::string, schema::Validator> all = [] {
    std::map<std::string, schema::Validator> m;
    for (const auto& [k, text] : schema::protocol_schemas()) m.emplace(k, schema::Validator(json::parse(text)));
    return m;
  }();
  return all.at(name);
}

// Parses a body that must be a JSON object; 400 otherwise.
inline std::optional<Reply> parse_object(const std::string& body, json& out) {
  try {
    out = json::parse(body);
  } catch (const json::exception& e) {
    return error_reply(400, "MalformedBody", e.what());
  }
  if (!out.is_object()) return error_reply(400, "MalformedBody", "body must be a JSON object");
  return std::nullopt;
}

inline std::optional<Reply> check_schema(const std::string& name, const json& doc) {
  auto errors = validator(name).validate(doc);
  if (errors.empty()) return std::nullopt;
  return error_reply(422, "SchemaViolation", text::join(errors, "; "));
}

// ---------------------------------------------------------------------------
// Evaluation jobs

class JobManager {
 public:
  struct Job {
    std::string status = "queued";
    std::size_t done = 0;
    std::size_t total = 0;
    std::optional<json> report;
    std::optional<std::string> error;
  };

  ~JobManager() {
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
  }

  template <typename Work>
  std::string submit(std::size_t total, Work work) {
    std::lock_guard lock(mu_);
    std::string id = "job-" + std::to_string(++counter_);
    jobs_[id].total = total;
    threads_.emplace_back([this, id, work = std::move(work)]() mutable {
      update(id, [](Job& j) { j.status = "running"; });
      try {
        json report = work([this, id](std::size_t done) { update(id, [done](Job& j) { j.done = done; }); });
        update(id, [&](Job& j) {
          j.status = "done";
          j.done = j.total;
          j.report = std::move(report);
        });
      } catch (const std::exception& e) {
        std::string msg = e.what();
        update(id, [&](Job& j) {
          j.status = "failed";
          j.error = msg;
        });
      }
    });
    return id;
  }

  std::optional<json> status(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    const Job& j = it->second;
    json out{{"id", id}, {"status", j.status}, {"done", j.done}, {"total", j.total}};
    if (j.report) out["report"] = *j.report;
    if (j.error) out["error"] = *j.error;
    return out;
  }

 private:
  template <typename F>
  void update(const std::string& id, F f) {
    std::lock_guard lock(mu_);
    f(jobs_[id]);
  }

  mutable std::mutex mu_;
  std::map<std::string, Job> jobs_;
  std::vector<std::thread> threads_;
  std::size_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Request handlers. Pure functions of (state, body) so they can be tested
// without a socket; the HTTP layer below only routes.

struct ServiceState {
  std::map<std::string, std::shared_ptr<const Backend>> backends;
  std::string default_backend;
  std::shared_ptr<const EmbeddingTable> embeddings;  // for /v1/embed mode=static
  std::string model_hash;
  std::size_t batch_limit = 256;
  GenerationConfig defaults;
  JobManager jobs;

  const Backend* backend(const std::string& name) const {
    auto it = backends.find(name);
    return it == backends.end() ? nullptr : it->second.get();
  }
  const Backend& primary() const { return *backends.at(default_backend); }
};

inline Reply handle_suggest(const ServiceState& st, const std::string& body) {
  json req;
  if (auto bad = parse_object(body, req)) return *bad;
  if (!req.contains("prefix") || !req["prefix"].is_string()) {
    return error_reply(400, "MalformedBody", "'prefix' must be a string");
  }
  const std::string prefix = req["prefix"].get<std::string>();
  if (tokenize_words(prefix).empty()) return error_reply(400, "EmptyPrefix", "prefix has no words");
  if (auto bad = check_schema("suggest_request", req)) return *bad;

  GenerationConfig cfg = st.defaults;
  cfg.n_return = req.value("n", std::size_t{5});
  cfg.do_sample = req.value("do_sample", true);
  cfg.temperature = req.value("temperature", 1.0);
  if (req.contains("top_k")) {
    cfg.top_k = req["top_k"].is_null() ? std::nullopt : std::optional<std::size_t>(req["top_k"].get<std::size_t>());
  }
  if (req.contains("top_p")) {
    cfg.top_p = req["top_p"].is_null() ? std::nullopt : std::optional<double>(req["top_p"].get<double>());
  }
  cfg.max_new_words = req.value("max_new_words", std::size_t{5});
  if (req.contains("seed")) cfg.rng_seed = req["seed"].get<std::uint64_t>();

  const std::string name = req.value("backend", st.default_backend);
  const Backend* backend = st.backend(name);
  if (!backend) return error_reply(422, "UnknownBackend", "no backend named '" + name + "'");

  try {
    auto t0 = std::chrono::steady_clock::now();
    auto cands = complete(*backend, prefix, cfg);
    auto t1 = std::chrono::steady_clock::now();
    json out_c = json::array();
    for (const auto& c : cands) {
      out_c.push_back({{"text", c.full_text},
                       {"completion", c.completion()},
                       {"logprob", c.total_logprob},
                       {"stop", stop_name(c.stop)}});
    }
    return Reply{200, json{{"candidates", std::move(out_c)},
                           {"backend", name},
                           {"latency_ms", std::chrono::duration<double, std::milli>(t1 - t0).count()}}};
  } catch (const Error& e) {
    if (e.code() == Errc::BackendUnavailable) return error_reply(503, errc_name(e.code()), e.detail());
    if (e.code() == Errc::EmptyPrefix) return error_reply(400, errc_name(e.code()), e.detail());
    return error_reply(422, errc_name(e.code()), e.detail());
  }
}

inline Reply handle_next(const ServiceState& st, const std::string& body) {
  json req;
  if (auto bad = parse_object(body, req)) return *bad;
  if (auto bad = check_schema("next_request", req)) return *bad;
  try {
    const Backend& b = st.primary();
    auto words = req["context_words"].get<std::vector<std::string>>();
    auto dist = b.next(words);
    json ids = json::array(), probs = json::array(), toks = json::array();
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] <= 0.0) continue;
      ids.push_back(i);
      probs.push_back(dist[i]);
      toks.push_back(b.vocab().token(static_cast<TokenId>(i)));
    }
    return Reply{200, json{{"vocab_ids", std::move(ids)}, {"probs", std::move(probs)}, {"tokens", std::move(toks)}}};
  } catch (const std::exception& e) {
    return error_reply(500, "ModelFailure", e.what());
  }
}

inline Reply handle_logprobs(const ServiceState& st, const std::string& body) {
  json req;
  if (auto bad = parse_object(body, req)) return *bad;
  if (auto bad = check_schema("logprobs_request", req)) return *bad;
  const auto& sentences = req["sentences"];
  if (sentences.size() > st.batch_limit) {
    return error_reply(413, "BatchTooLarge", std::to_string(sentences.size()) + " > " + std::to_string(st.batch_limit));
  }
  std::vector<std::vector<std::string>> words;
  for (const auto& s : sentences) words.push_back(tokenize_words(s.get<std::string>()));
  try {
    const Backend& b = st.primary();
    auto scored = b.logprobs(words);
    json items = json::array();
    for (std::size_t i = 0; i < scored.size(); ++i) {
      std::vector<std::string> toks{"<sos>"};
      toks.insert(toks.end(), words[i].begin(), words[i].end());
      toks.push_back("<eos>");
      items.push_back({{"tokens", toks}, {"logprobs", scored[i].logprobs}});
    }
    return Reply{200, json{{"items", std::move(items)}}};
  } catch (const std::exception& e) {
    return error_reply(500, "ModelFailure", e.what());
  }
}

inline Reply handle_embed(const ServiceState& st, const std::string& body) {
  json req;
  if (auto bad = parse_object(body, req)) return *bad;
  if (auto bad = check_schema("embed_request", req)) return *bad;
  const auto& sentences = req["sentences"];
  if (sentences.size() > st.batch_limit) {
    return error_reply(413, "BatchTooLarge", std::to_string(sentences.size()) + " > " + std::to_string(st.batch_limit));
  }
  const std::string mode = req.value("mode", std::string("static"));
  if (mode != "static") {
    return error_reply(422, "UnsupportedMode", "this server provides static embeddings only");
  }
  if (!st.embeddings) return error_reply(500, "ModelFailure", "no embedding table loaded");
  json items = json::array();
  for (const auto& s : sentences) {
    auto words = tokenize_words(s.get<std::string>());
    if (words.empty()) return error_reply(422, "EmptySentence", "sentence has no words");
    auto e = st.embeddings->embed(words);
    items.push_back({{"tokens", e.tokens}, {"vectors", e.vectors}});
  }
  return Reply{200, json{{"items", std::move(items)}}};
}

inline Reply handle_vocab(const ServiceState& st) {
  const auto& v = st.primary().vocab();
  return Reply{200, json{{"tokens", v.tokens()}, {"hash", v.hash()}}};
}

inline Reply handle_healthz(const ServiceState& st) {
  return Reply{200, json{{"status", "ok"},
                         {"backend", st.default_backend},
                         {"model_hash", st.model_hash},
                         {"eos_reliable", st.primary().eos_reliable()}}};
}

inline Reply handle_job_submit(ServiceState& st, const std::string& body) {
  json req;
  if (auto bad = parse_object(body, req)) return *bad;
  if (auto bad = check_schema("job_request", req)) return *bad;
  const std::string seeds = req["seeds"].get<std::string>();
  const std::string refs = req.value(
      "references", (std::filesystem::path(seeds).parent_path() / "test.txt").string());
  std::vector<EvalItem> items;
  try {
    items = load_eval_items(seeds, refs);
  } catch (const Error& e) {
    return error_reply(422, errc_name(e.code()), e.detail());
  }
  const Backend* backend = st.backend(req.value("backend", st.default_backend));
  if (!backend && !req.contains("candidates")) return error_reply(422, "UnknownBackend", "no such backend");

  EvaluationOptions opt;
  opt.metric = req.value("metric", std::string("bertscore")) == "cosine" ? MetricKind::AvgCosine : MetricKind::BertScoreF;
  opt.aggregate = parse_aggregate(req.value("aggregate", std::string("mean")));
  GenerationConfig cfg = st.defaults;
  cfg.rng_seed = req.value("seed", std::uint64_t{0});
  std::string emb = req["embeddings"].get<std::string>();
  std::optional<std::string> recorded;
  if (req.contains("candidates")) recorded = req["candidates"].get<std::string>();

  std::size_t total = items.size();
  std::string id = st.jobs.submit(total, [items = std::move(items), backend, cfg, opt, emb, recorded](auto progress) mutable {
    std::unique_ptr<EmbeddingProvider> provider;
    if (emb.rfind("http://", 0) == 0) {
      provider = std::make_unique<HttpEmbeddingProvider>(emb);
    } else if (emb.size() >= 6 && emb.substr(emb.size() - 6) == ".jsonl") {
      provider = std::make_unique<ContextualFileProvider>(emb);
    } else {
      provider = std::make_unique<StaticEmbeddingProvider>(EmbeddingTable::load(emb), "static:" + emb);
    }
    std::unique_ptr<CandidateSource> source;
    if (recorded) {
      source = std::make_unique<RecordedCandidateSource>(*recorded);
    } else {
      source = std::make_unique<LiveCandidateSource>(*backend, cfg);
    }
    opt.on_progress = progress;
    return run_evaluation(items, *source, *provider, opt).to_json();
  });
  return Reply{202, json{{"id", id}}};
}

inline Reply handle_job_status(const ServiceState& st, const std::string& id) {
  auto s = st.jobs.status(id);
  if (!s) return error_reply(404, "NotFound", "no job " + id);
  return Reply{200, *s};
}

// ---------------------------------------------------------------------------
// HTTP server

class Server {
 public:
  explicit Server(std::shared_ptr<ServiceState> state) : state_(std::move(state)) { routes(); }

  ~Server() { stop(); }

  bool mount_static(const std::string& dir) { return http_.set_mount_point("/", dir); }

  // Blocks until stop().
  bool listen(const std::string& host, int port) { return http_.listen(host, port); }

  // Binds (port 0 = any free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    int bound = port == 0 ? http_.bind_to_any_port(host) : (http_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::Io, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
    return bound;
  }

  void stop() {
    http_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  static void send(httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  void routes() {
    auto& st = *state_;
    http_.Post("/v1/suggest", [&st](const httplib::Request& req, httplib::Response& res) {
      send(res, handle_suggest(st, req.body));
    });
    http_.Post("/v1/next", [&st](const httplib::Request& req, httplib::Response& res) {
      send(res, handle_next(st, req.body));
    });
    http_.Post("/v1/logprobs", [&st](const httplib::Request& req, httplib::Response& res) {
      send(res, handle_logprobs(st, req.body));
    });
    http_.Post("/v1/embed", [&st](const httplib::Request& req, httplib::Response& res) {
      send(res, handle_embed(st, req.body));
    });
    http_.Get("/v1/vocab", [&st](const httplib::Request&, httplib::Response& res) { send(res, handle_vocab(st)); });
    http_.Get("/healthz", [&st](const httplib::Request&, httplib::Response& res) { send(res, handle_healthz(st)); });
    http_.Post("/v1/jobs", [&st](const httplib::Request& req, httplib::Response& res) {
      send(res, handle_job_submit(st, req.body));
    });
    http_.Get(R"(/v1/jobs/([A-Za-z0-9_-]+))", [&st](const httplib::Request& req, httplib::Response& res) {
      send(res, handle_job_status(st, req.matches[1]));
    });
    http_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string msg = "unknown error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        msg = e.what();
      } catch (...) {
      }
      send(res, error_reply(500, "InternalError", msg));
    });
  }

  std::shared_ptr<ServiceState> state_;
  httplib::Server http_;
  std::thread thread_;
};

}  // namespace ccac::service
