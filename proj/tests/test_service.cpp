#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ccac/http_backend.hpp"
#include "ccac/preprocess.hpp"
#include "ccac/service.hpp"

using namespace ccac;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kEval = std::string(CCAC_FIXTURES) + "/eval";

std::vector<std::vector<std::string>> toy_corpus() {
  std::vector<std::vector<std::string>> out;
  for (const char* s : {"chest pain radiating to left arm", "chest pain since this morning", "chest tightness and cough",
                        "fever and cough since yesterday", "abdominal pain with nausea", "abdominal pain and vomiting",
                        "shortness of breath", "shortness of breath with chest pain", "headache and dizziness",
                        "fall from standing", "left arm pain after fall", "cough with fever and chills"}) {
    out.push_back(tokenize_words(s));
  }
  return out;
}

std::shared_ptr<const NGramModel> toy_model() {
  static auto m = [] {
    auto c = toy_corpus();
    return std::make_shared<const NGramModel>(NGramModel::train(c, build_vocab(c), 3, 0.75));
  }();
  return m;
}

// Backend whose remote end has gone away.
class DownBackend final : public Backend {
 public:
  std::string name() const override { return "down"; }
  const Vocabulary& vocab() const override { return toy_model()->vocab(); }
  std::vector<double> next(std::span<const std::string>) const override {
    throw Error(Errc::BackendUnavailable, "connection refused");
  }
  std::vector<ScoredSequence> logprobs(const std::vector<std::vector<std::string>>&) const override {
    throw Error(Errc::BackendUnavailable, "connection refused");
  }
};

std::shared_ptr<service::ServiceState> make_state() {
  auto st = std::make_shared<service::ServiceState>();
  st->backends["ngram"] = std::make_shared<NGramBackend>(toy_model(), "ngram");
  st->backends["down"] = std::make_shared<DownBackend>();
  st->default_backend = "ngram";
  st->model_hash = toy_model()->vocab().hash();
  st->embeddings = std::make_shared<const EmbeddingTable>(
      EmbeddingTable::parse("#dim 2\n<unk>\t1 0\nchest\t0 1\npain\t1 1\n"));
  st->batch_limit = 4;
  return st;
}

void expect_valid(const std::string& schema, const json& doc) {
  auto errors = service::validator(schema).validate(doc);
  EXPECT_TRUE(errors.empty()) << schema << ": " << text::join(errors, "; ") << "\n" << doc.dump();
}

void expect_error(const service::Reply& r, int status, const std::string& code) {
  EXPECT_EQ(r.status, status) << r.body.dump();
  EXPECT_EQ(r.body.value("error", ""), code) << r.body.dump();
  expect_valid("error_response", r.body);
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema validator

TEST(Validator, TypesRequiredAndExtras) {
  schema::Validator v(json::parse(R"({"type":"object","required":["a"],
      "properties":{"a":{"type":"integer","minimum":1},"b":{"type":["number","null"]}},
      "additionalProperties":false})"));
  EXPECT_TRUE(v.ok(json{{"a", 3}}));
  EXPECT_TRUE(v.ok(json{{"a", 3}, {"b", nullptr}}));
  EXPECT_TRUE(v.ok(json{{"a", 3}, {"b", 0.5}}));
  EXPECT_FALSE(v.ok(json{{"b", 0.5}}));
  EXPECT_FALSE(v.ok(json{{"a", 0}}));
  EXPECT_FALSE(v.ok(json{{"a", 1.5}}));
  EXPECT_FALSE(v.ok(json{{"a", 1}, {"c", 1}}));
  EXPECT_FALSE(v.ok(json::array()));
}

TEST(Validator, NumbersStringsArraysEnums) {
  schema::Validator num(json::parse(R"({"type":"number","exclusiveMinimum":0,"maximum":1})"));
  EXPECT_TRUE(num.ok(1.0));
  EXPECT_FALSE(num.ok(0.0));
  EXPECT_FALSE(num.ok(1.0000001));
  schema::Validator str(json::parse(R"({"type":"string","minLength":2})"));
  EXPECT_FALSE(str.ok("a"));
  EXPECT_TRUE(str.ok("ab"));
  schema::Validator arr(json::parse(R"({"type":"array","minItems":1,"maxItems":2,"items":{"enum":["x","y"]}})"));
  EXPECT_TRUE(arr.ok(json{"x", "y"}));
  EXPECT_FALSE(arr.ok(json::array()));
  EXPECT_FALSE(arr.ok(json{"x", "y", "x"}));
  auto errs = arr.validate(json{"x", "z"});
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0].rfind("/1:", 0), 0u) << errs[0];
}

TEST(Schemas, ShippedFilesMatchCompiledCopies) {
  std::set<std::string> on_disk;
  for (const auto& entry : fs::directory_iterator(CCAC_SCHEMAS)) {
    std::string name = entry.path().filename().string();
    const std::string suffix = ".schema.json";
    ASSERT_TRUE(name.size() > suffix.size() && name.ends_with(suffix)) << name;
    name.resize(name.size() - suffix.size());
    on_disk.insert(name);
    auto it = schema::protocol_schemas().find(name);
    ASSERT_NE(it, schema::protocol_schemas().end()) << name;
    EXPECT_EQ(json::parse(text::read_file(entry.path().string())), json::parse(it->second)) << name;
  }
  EXPECT_EQ(on_disk.size(), schema::protocol_schemas().size());
}

// ---------------------------------------------------------------------------
// Handlers

TEST(Suggest, ReturnsNPrefixPreservingCandidates) {
  auto st = make_state();
  for (std::size_t n : {1u, 3u, 5u, 8u}) {
    auto r = service::handle_suggest(*st, json{{"prefix", "chest pain"}, {"n", n}, {"seed", 4}}.dump());
    ASSERT_EQ(r.status, 200) << r.body.dump();
    expect_valid("suggest_response", r.body);
    ASSERT_EQ(r.body["candidates"].size(), n);
    for (const auto& c : r.body["candidates"]) {
      EXPECT_EQ(c["text"].get<std::string>().rfind("chest pain", 0), 0u);
      EXPECT_LE(c["logprob"].get<double>(), 0.0);
    }
  }
}

TEST(Suggest, GreedyIsDeterministic) {
  auto st = make_state();
  const std::string body = json{{"prefix", "abdominal"}, {"do_sample", false}, {"n", 3}}.dump();
  auto a = service::handle_suggest(*st, body);
  auto b = service::handle_suggest(*st, body);
  ASSERT_EQ(a.status, 200);
  EXPECT_EQ(a.body["candidates"], b.body["candidates"]);
  EXPECT_EQ(a.body["candidates"][0]["text"], "abdominal pain and vomiting");
}

TEST(Suggest, ErrorStatuses) {
  auto st = make_state();
  expect_error(service::handle_suggest(*st, "{not json"), 400, "MalformedBody");
  expect_error(service::handle_suggest(*st, "[1,2]"), 400, "MalformedBody");
  expect_error(service::handle_suggest(*st, R"({"n":3})"), 400, "MalformedBody");
  expect_error(service::handle_suggest(*st, R"({"prefix":"   "})"), 400, "EmptyPrefix");
  expect_error(service::handle_suggest(*st, R"({"prefix":"chest","n":0})"), 422, "SchemaViolation");
  expect_error(service::handle_suggest(*st, R"({"prefix":"chest","top_p":1.5})"), 422, "SchemaViolation");
  expect_error(service::handle_suggest(*st, R"({"prefix":"chest","beam":4})"), 422, "SchemaViolation");
  expect_error(service::handle_suggest(*st, R"({"prefix":"chest","backend":"gpt"})"), 422, "UnknownBackend");
  expect_error(service::handle_suggest(*st, R"({"prefix":"chest","backend":"down"})"), 503, "BackendUnavailable");
}

TEST(Suggest, PunctuatedPrefixKeptVerbatim) {
  auto st = make_state();
  const std::string prefix = "Reports have chills, fever,";
  auto r = service::handle_suggest(*st, json{{"prefix", prefix}, {"n", 5}}.dump());
  ASSERT_EQ(r.status, 200) << r.body.dump();
  ASSERT_EQ(r.body["candidates"].size(), 5u);
  double last = 0.0;
  for (const auto& c : r.body["candidates"]) {
    EXPECT_EQ(c["text"].get<std::string>().rfind(prefix, 0), 0u) << c.dump();
    if (&c != &r.body["candidates"][0]) {
      EXPECT_LE(c["logprob"].get<double>(), last);
    }
    last = c["logprob"].get<double>();
  }
  expect_error(service::handle_suggest(*st, R"({"prefix":""})"), 400, "EmptyPrefix");
}

// Requests drawn around the schema bounds: valid ones get a conforming 200,
// everything else a conforming error body.
TEST(SuggestProperty, EveryResponseMatchesItsSchema) {
  auto st = make_state();
  std::mt19937_64 gen(31);
  const char* prefixes[] = {"chest", "fever and", "zzz unknown", "Shortness of breath,", "left arm pain after"};
  int ok = 0;
  for (int i = 0; i < 300; ++i) {
    json req{{"prefix", prefixes[gen() % 5]}};
    if (gen() % 2) req["n"] = static_cast<int>(gen() % 12) - 1;
    if (gen() % 2) req["do_sample"] = gen() % 2 == 0;
    if (gen() % 3 == 0) req["temperature"] = static_cast<double>(gen() % 30) / 10.0;
    if (gen() % 3 == 0) req["top_k"] = gen() % 4 == 0 ? json(nullptr) : json(static_cast<int>(gen() % 60));
    if (gen() % 3 == 0) req["top_p"] = gen() % 4 == 0 ? json(nullptr) : json(static_cast<double>(gen() % 12) / 10.0);
    if (gen() % 3 == 0) req["max_new_words"] = static_cast<int>(gen() % 8);
    if (gen() % 4 == 0) req["seed"] = gen() % 1000;
    const bool valid = service::validator("suggest_request").ok(req);
    auto r = service::handle_suggest(*st, req.dump());
    if (valid) {
      ASSERT_EQ(r.status, 200) << req.dump() << " -> " << r.body.dump();
      expect_valid("suggest_response", r.body);
      EXPECT_EQ(r.body["candidates"].size(), req.value("n", 5));
      ++ok;
    } else {
      EXPECT_GE(r.status, 400);
      expect_valid("error_response", r.body);
    }
  }
  EXPECT_GT(ok, 50);
}

TEST(Next, DistributionSumsToOne) {
  auto st = make_state();
  for (const char* ctx : {R"([])", R"(["chest"])", R"(["shortness","of"])", R"(["never","seen"])"}) {
    auto r = service::handle_next(*st, std::string(R"({"context_words":)") + ctx + "}");
    ASSERT_EQ(r.status, 200);
    expect_valid("next_response", r.body);
    double sum = 0.0;
    for (double p : r.body["probs"]) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-6) << ctx;
    EXPECT_EQ(r.body["vocab_ids"].size(), r.body["tokens"].size());
  }
  expect_error(service::handle_next(*st, R"({"context":[]})"), 422, "SchemaViolation");
}

TEST(Logprobs, ShapesAndBatchLimit) {
  auto st = make_state();
  auto r = service::handle_logprobs(*st, R"({"sentences":["chest pain","fever"]})");
  ASSERT_EQ(r.status, 200);
  expect_valid("logprobs_response", r.body);
  EXPECT_EQ(r.body["items"][0]["tokens"], json({"<sos>", "chest", "pain", "<eos>"}));
  EXPECT_EQ(r.body["items"][0]["logprobs"].size(), 3u);
  expect_error(service::handle_logprobs(*st, R"({"sentences":["a","b","c","d","e"]})"), 413, "BatchTooLarge");
}

TEST(Embed, StaticOnly) {
  auto st = make_state();
  auto r = service::handle_embed(*st, R"({"sentences":["chest pain","unknown"],"mode":"static"})");
  ASSERT_EQ(r.status, 200);
  expect_valid("embed_response", r.body);
  EXPECT_EQ(r.body["items"][1]["vectors"], json({{1.0, 0.0}}));
  expect_error(service::handle_embed(*st, R"({"sentences":["x"],"mode":"contextual"})"), 422, "UnsupportedMode");
  expect_error(service::handle_embed(*st, R"({"sentences":["  "]})"), 422, "EmptySentence");
  expect_error(service::handle_embed(*st, R"({"sentences":["a","b","c","d","e"]})"), 413, "BatchTooLarge");
}

TEST(Metadata, VocabAndHealth) {
  auto st = make_state();
  auto v = service::handle_vocab(*st);
  expect_valid("vocab_response", v.body);
  EXPECT_EQ(v.body["tokens"][0], "<sos>");
  auto h = service::handle_healthz(*st);
  expect_valid("healthz_response", h.body);
  EXPECT_TRUE(h.body["eos_reliable"].get<bool>());
}

TEST(Jobs, RecordedFixtureRunsToCompletion) {
  auto st = make_state();
  auto sub = service::handle_job_submit(*st, json{{"seeds", kEval + "/seeds.tsv"},
                                                 {"candidates", kEval + "/candidates.jsonl"},
                                                 {"embeddings", kEval + "/embeddings.jsonl"}}
                                                .dump());
  ASSERT_EQ(sub.status, 202) << sub.body.dump();
  const std::string id = sub.body["id"];
  json status;
  for (int i = 0; i < 500; ++i) {
    status = service::handle_job_status(*st, id).body;
    if (status["status"] == "done" || status["status"] == "failed") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  expect_valid("job_status", status);
  ASSERT_EQ(status["status"], "done") << status.dump();
  EXPECT_EQ(status["done"], 24);
  EXPECT_EQ(status["report"], json::parse(text::read_file(kEval + "/expected_report.json")));

  expect_error(service::handle_job_status(*st, "job-999"), 404, "NotFound");
  expect_error(service::handle_job_submit(*st, json{{"seeds", "/no/such/seeds.tsv"}, {"embeddings", "x"}}.dump()),
               422, "Io");
  expect_error(service::handle_job_submit(*st, R"({"seeds":"s.tsv"})"), 422, "SchemaViolation");
}

// ---------------------------------------------------------------------------
// Over the wire

class Loopback : public ::testing::Test {
 protected:
  void SetUp() override {
    state_ = make_state();
    server_ = std::make_unique<service::Server>(state_);
    port_ = server_->start();
    url_ = "http://127.0.0.1:" + std::to_string(port_);
  }
  void TearDown() override { server_->stop(); }

  std::shared_ptr<service::ServiceState> state_;
  std::unique_ptr<service::Server> server_;
  int port_ = 0;
  std::string url_;
};

TEST_F(Loopback, RemoteBackendMatchesLocal) {
  HttpBackend remote(url_);
  NGramBackend local(toy_model());
  EXPECT_EQ(remote.vocab(), local.vocab());
  for (const char* prefix : {"chest", "shortness of", "fever and", "left arm pain"}) {
    for (bool sample : {false, true}) {
      GenerationConfig cfg;
      cfg.do_sample = sample;
      cfg.rng_seed = 17;
      auto a = complete(remote, prefix, cfg);
      auto b = complete(local, prefix, cfg);
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].full_text, b[i].full_text);
        EXPECT_EQ(a[i].token_logprobs, b[i].token_logprobs);
      }
    }
  }
  auto ra = remote.logprobs({{"chest", "pain"}, {"never", "seen"}});
  auto rb = local.logprobs({{"chest", "pain"}, {"never", "seen"}});
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) EXPECT_EQ(ra[i].logprobs, rb[i].logprobs);
}

TEST_F(Loopback, HttpStatusCodes) {
  httplib::Client cli("127.0.0.1", port_);
  auto bad = cli.Post("/v1/suggest", "{oops", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  auto missing = cli.Get("/v1/jobs/job-42");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  auto ok = cli.Post("/v1/suggest", R"({"prefix":"chest","n":2})", "application/json");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);
  expect_valid("suggest_response", json::parse(ok->body));
}

TEST_F(Loopback, ConcurrentGreedyRequestsAgree) {
  const std::string body = R"({"prefix":"chest","do_sample":false,"n":5})";
  std::vector<std::string> got(8);
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < got.size(); ++t) {
    threads.emplace_back([&, t] {
      httplib::Client cli("127.0.0.1", port_);
      auto res = cli.Post("/v1/suggest", body, "application/json");
      if (res && res->status == 200) got[t] = json::parse(res->body)["candidates"].dump();
    });
  }
  for (auto& th : threads) th.join();
  ASSERT_FALSE(got[0].empty());
  for (const auto& g : got) EXPECT_EQ(g, got[0]);
}

TEST(Remote, UnreachableBackend) {
  try {
    HttpBackend b("http://127.0.0.1:1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BackendUnavailable);
  }
}
