// ccac: chief-complaint autocompletion pipeline driver.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "ccac/corpus.hpp"
#include "ccac/error.hpp"
#include "ccac/generate.hpp"
#include "ccac/harness.hpp"
#include "ccac/http_backend.hpp"
#include "ccac/metrics.hpp"
#include "ccac/ngram.hpp"
#include "ccac/preprocess.hpp"
#include "ccac/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_url(const std::string& s) { return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0; }

std::shared_ptr<const ccac::Backend> open_backend(const std::string& where) {
  if (is_url(where)) return std::make_shared<ccac::HttpBackend>(where);
  auto model = std::make_shared<const ccac::NGramModel>(ccac::NGramModel::load(where));
  return std::make_shared<ccac::NGramBackend>(model, "ngram:" + fs::path(where).filename().string());
}

std::unique_ptr<ccac::EmbeddingProvider> open_embeddings(const std::string& where) {
  if (is_url(where)) return std::make_unique<ccac::HttpEmbeddingProvider>(where);
  if (fs::path(where).extension() == ".jsonl") return std::make_unique<ccac::ContextualFileProvider>(where);
  return std::make_unique<ccac::StaticEmbeddingProvider>(ccac::EmbeddingTable::load(where),
                                                         "static:" + fs::path(where).filename().string());
}

std::string sibling_text_file(const std::string& path, const char* name) {
  return (fs::path(path).parent_path() / name).string();
}

fs::path replace_ext(const std::string& path, const char* ext) {
  fs::path p(path);
  p.replace_extension(ext);
  return p;
}

struct GenFlags {
  std::size_t n = 5;
  bool greedy = false;
  std::optional<std::uint64_t> seed;
  double temperature = 1.0;
  std::size_t top_k = 50;
  double top_p = 0.95;
  std::size_t max_new_words = 5;

  void add_to(CLI::App* cmd) {
    cmd->add_option("-n", n, "Candidates to return")->check(CLI::PositiveNumber);
    cmd->add_flag("--greedy", greedy, "Argmax decoding instead of sampling");
    cmd->add_option("--seed", seed, "Sampling seed");
    cmd->add_option("--temperature", temperature);
    cmd->add_option("--top-k", top_k, "0 disables the filter");
    cmd->add_option("--top-p", top_p, "1 disables the filter");
    cmd->add_option("--max-new-words", max_new_words);
  }

  ccac::GenerationConfig config() const {
    ccac::GenerationConfig c;
    c.n_return = n;
    c.do_sample = !greedy;
    c.temperature = temperature;
    c.top_k = top_k == 0 ? std::nullopt : std::optional<std::size_t>(top_k);
    c.top_p = top_p >= 1.0 ? std::nullopt : std::optional<double>(top_p);
    c.max_new_words = max_new_words;
    c.rng_seed = seed;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chief-complaint autocompletion: preprocessing, n-gram backend, suggestion service and evaluation"};
  app.require_subcommand(1);

  // preprocess
  std::string pp_input, pp_out, pp_format;
  std::uint64_t pp_seed = 0;
  std::size_t pp_min_count = 1;
  auto* pp = app.add_subcommand("preprocess", "Corpus -> sentences, splits, seeds, vocabulary");
  pp->add_option("--input", pp_input, "TSV/CSV corpus")->required();
  pp->add_option("--out", pp_out, "Output directory")->required();
  pp->add_option("--seed", pp_seed, "Shuffle seed")->required();
  pp->add_option("--min-count", pp_min_count, "Vocabulary frequency floor")->check(CLI::PositiveNumber);
  pp->add_option("--format", pp_format, "tsv|csv (default: from extension)")->check(CLI::IsMember({"tsv", "csv"}));

  // train-ngram
  std::string tr_train, tr_out, tr_vocab;
  std::size_t tr_order = ccac::NGramModel::kDefaultOrder, tr_min_count = 1;
  double tr_discount = ccac::NGramModel::kDefaultDiscount;
  auto* tr = app.add_subcommand("train-ngram", "Train the absolute-discounting n-gram backend");
  tr->add_option("--train", tr_train, "Training sentences, one per line")->required();
  tr->add_option("--order", tr_order)->check(CLI::PositiveNumber);
  tr->add_option("--discount", tr_discount);
  tr->add_option("--out", tr_out, "Model file")->required();
  tr->add_option("--vocab", tr_vocab, "Use this vocab.txt instead of building one");
  tr->add_option("--min-count", tr_min_count)->check(CLI::PositiveNumber);

  // suggest
  std::string sg_model, sg_prefix;
  GenFlags sg_gen;
  auto* sg = app.add_subcommand("suggest", "Print candidate completions as JSON lines");
  sg->add_option("--model", sg_model, "Model file or backend URL")->required();
  sg->add_option("--prefix", sg_prefix)->required();
  sg_gen.add_to(sg);

  // evaluate
  std::string ev_seeds, ev_backend, ev_metric = "bertscore", ev_embeddings, ev_out, ev_aggregate = "mean";
  std::string ev_references, ev_candidates, ev_logprobs, ev_checkpoint, ev_model_name;
  std::optional<double> ev_exec_ms;
  GenFlags ev_gen;
  auto* ev = app.add_subcommand("evaluate", "Scenario bucket tables or perplexity report");
  ev->add_option("--seeds", ev_seeds, "seeds.tsv");
  ev->add_option("--references", ev_references, "Reference sentences aligned with seeds (default: test.txt beside seeds)");
  ev->add_option("--backend", ev_backend, "Model file or backend URL");
  ev->add_option("--candidates", ev_candidates, "Recorded candidates JSONL instead of live generation");
  ev->add_option("--logprobs", ev_logprobs, "Recorded logprobs: one run (.jsonl) or a table manifest (.json)");
  ev->add_option("--metric", ev_metric)->check(CLI::IsMember({"bertscore", "cosine", "perplexity"}));
  ev->add_option("--embeddings", ev_embeddings, "Static table, contextual JSONL or embed URL");
  ev->add_option("--out", ev_out, "Report path (.json; a .txt table is written beside it)")->required();
  ev->add_option("--aggregate", ev_aggregate)->check(CLI::IsMember({"mean", "min", "max"}));
  ev->add_option("--checkpoint", ev_checkpoint, "Resumable progress file");
  ev->add_option("--model-name", ev_model_name, "Row label for the perplexity table");
  ev->add_option("--execution-ms", ev_exec_ms, "Recorded execution time for the perplexity table");
  ev_gen.add_to(ev);

  // serve
  std::string sv_model, sv_backend_url, sv_embeddings, sv_static, sv_host = "0.0.0.0";
  int sv_port = 8080;
  if (const char* p = std::getenv("CCAC_PORT")) sv_port = std::atoi(p);
  if (const char* u = std::getenv("CCAC_BACKEND_URL")) sv_backend_url = u;
  auto* sv = app.add_subcommand("serve", "HTTP suggestion service and backend protocol");
  sv->add_option("--model", sv_model, "n-gram model file")->required();
  sv->add_option("--port", sv_port, "Port (env CCAC_PORT)");
  sv->add_option("--host", sv_host);
  sv->add_option("--backend-url", sv_backend_url, "Remote backend registered as 'remote' (env CCAC_BACKEND_URL)");
  sv->add_option("--embeddings", sv_embeddings, "Static table served by /v1/embed");
  sv->add_option("--static-dir", sv_static, "Directory served at /");

  // bench
  std::string bn_backend, bn_prefix;
  std::size_t bn_repeats = 10;
  GenFlags bn_gen;
  auto* bn = app.add_subcommand("bench", "Time candidate generation");
  bn->add_option("--backend", bn_backend, "Model file or backend URL")->required();
  bn->add_option("--prefix", bn_prefix)->required();
  bn->add_option("--repeats", bn_repeats)->check(CLI::PositiveNumber);
  bn_gen.add_to(bn);

  // prompt
  std::string pr_train, pr_out, pr_instruction = ccac::default_fewshot_instruction();
  std::size_t pr_k = 100;
  std::uint64_t pr_seed = 0;
  auto* pr = app.add_subcommand("prompt", "Assemble a few-shot prompt document (no network call)");
  pr->add_option("--train", pr_train)->required();
  pr->add_option("-k", pr_k, "Exemplar count (>= 10)");
  pr->add_option("--seed", pr_seed);
  pr->add_option("--out", pr_out)->required();
  pr->add_option("--instruction", pr_instruction);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "Usage"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }

  try {
    if (*pp) {
      auto format = pp_format.empty() ? ccac::format_from_path(pp_input)
                                      : (pp_format == "csv" ? ccac::CorpusFormat::Csv : ccac::CorpusFormat::Tsv);
      auto load = ccac::load_corpus(pp_input, format);
      ccac::PreprocessOptions opt;
      opt.seed = pp_seed;
      opt.min_count = pp_min_count;
      auto result = ccac::preprocess(load.records, opt);
      ccac::write_artifacts(result, pp_out);
      ccac::text::write_file((fs::path(pp_out) / "ingest.json").string(), load.manifest().dump(2) + "\n");
      std::cout << result.manifest().dump() << "\n";
    } else if (*tr) {
      auto sentences = ccac::read_sentence_file(tr_train);
      auto vocab = tr_vocab.empty() ? ccac::build_vocab(sentences, tr_min_count) : ccac::read_vocab_file(tr_vocab);
      auto model = ccac::NGramModel::train(sentences, vocab, tr_order, tr_discount);
      model.save(tr_out);
      std::cout << json{{"model", tr_out},      {"order", tr_order},
                        {"discount", tr_discount}, {"vocab_size", vocab.size()},
                        {"sentences", sentences.size()}, {"vocab_hash", vocab.hash()}}
                       .dump()
                << "\n";
    } else if (*sg) {
      auto backend = open_backend(sg_model);
      auto cfg = sg_gen.config();
      if (!cfg.rng_seed) cfg.rng_seed = 0;
      for (const auto& c : ccac::complete(*backend, sg_prefix, cfg)) {
        std::cout << json{{"text", c.full_text},
                          {"completion", c.completion()},
                          {"logprob", c.total_logprob},
                          {"stop", ccac::stop_name(c.stop)}}
                         .dump()
                  << "\n";
      }
    } else if (*ev) {
      if (ev_seeds.empty() && (ev_metric != "perplexity" || ev_logprobs.empty())) {
        throw ccac::Error(ccac::Errc::InvalidConfig, "--seeds is required");
      }
      const std::string refs = ev_references.empty() && !ev_seeds.empty() ? sibling_text_file(ev_seeds, "test.txt")
                                                                          : ev_references;
      if (ev_metric == "perplexity" && fs::path(ev_logprobs).extension() == ".json") {
        auto rows = ccac::load_perplexity_manifest(ev_logprobs);
        json report{{"metric", "perplexity"}, {"pooling", "token-weighted"}, {"rows", json::array()}};
        for (const auto& r : rows) {
          report["rows"].push_back({{"model", r.model},
                                    {"perplexity", r.perplexity},
                                    {"spread", r.spread ? json(*r.spread) : json(nullptr)},
                                    {"execution_ms", r.execution_ms ? json(*r.execution_ms) : json(nullptr)}});
        }
        ccac::text::write_file(ev_out, report.dump(2) + "\n");
        auto table = ccac::format_perplexity_table(rows);
        ccac::text::write_file(replace_ext(ev_out, ".txt").string(), table);
        std::cout << table;
      } else if (ev_metric == "perplexity") {
        std::vector<ccac::ScoredSequence> scored;
        std::string label = ev_model_name;
        if (!ev_logprobs.empty()) {
          scored = ccac::load_recorded_logprobs(ev_logprobs);
          if (label.empty()) label = fs::path(ev_logprobs).stem().string();
        } else {
          if (ev_backend.empty()) throw ccac::Error(ccac::Errc::InvalidConfig, "--backend or --logprobs required");
          auto backend = open_backend(ev_backend);
          std::vector<std::vector<std::string>> sentences;
          for (const auto& item : ccac::load_eval_items(ev_seeds, refs)) {
            sentences.push_back(ccac::tokenize_words(item.reference));
          }
          scored = backend->logprobs(sentences);
          if (label.empty()) label = backend->name();
          if (!ev_exec_ms) {
            auto cfg = ev_gen.config();
            auto bench = ccac::bench_generation(*backend, ccac::text::join(sentences.front()), cfg, 3);
            ev_exec_ms = bench.timing.mean_ms;
          }
        }
        auto row = ccac::perplexity_row(label, {scored}, ev_exec_ms);
        std::vector<double> per_sentence;
        for (const auto& s : scored) per_sentence.push_back(ccac::perplexity(s));
        json report{{"metric", "perplexity"},
                    {"model", row.model},
                    {"sentences", scored.size()},
                    {"corpus_perplexity", row.perplexity},
                    {"pooling", "token-weighted"},
                    {"per_sentence", per_sentence},
                    {"execution_ms", row.execution_ms ? json(*row.execution_ms) : json(nullptr)}};
        ccac::text::write_file(ev_out, report.dump(2) + "\n");
        auto table = ccac::format_perplexity_table({row});
        ccac::text::write_file(replace_ext(ev_out, ".txt").string(), table);
        std::cout << table;
      } else {
        if (ev_embeddings.empty()) throw ccac::Error(ccac::Errc::InvalidConfig, "--embeddings is required");
        auto items = ccac::load_eval_items(ev_seeds, refs);
        auto embedder = open_embeddings(ev_embeddings);
        std::shared_ptr<const ccac::Backend> backend;
        std::unique_ptr<ccac::CandidateSource> source;
        if (!ev_candidates.empty()) {
          source = std::make_unique<ccac::RecordedCandidateSource>(ev_candidates);
        } else {
          if (ev_backend.empty()) throw ccac::Error(ccac::Errc::InvalidConfig, "--backend or --candidates required");
          backend = open_backend(ev_backend);
          auto cfg = ev_gen.config();
          if (!cfg.rng_seed) cfg.rng_seed = 0;
          source = std::make_unique<ccac::LiveCandidateSource>(*backend, cfg);
        }
        ccac::EvaluationOptions opt;
        opt.metric = ev_metric == "cosine" ? ccac::MetricKind::AvgCosine : ccac::MetricKind::BertScoreF;
        opt.aggregate = ccac::parse_aggregate(ev_aggregate);
        if (!ev_checkpoint.empty()) opt.checkpoint_path = ev_checkpoint;
        auto report = ccac::run_evaluation(items, *source, *embedder, opt);
        ccac::text::write_file(ev_out, report.serialize());
        ccac::text::write_file(replace_ext(ev_out, ".txt").string(), report.to_text());
        std::cout << report.to_text();
      }
    } else if (*sv) {
      auto state = std::make_shared<ccac::service::ServiceState>();
      auto model = std::make_shared<const ccac::NGramModel>(ccac::NGramModel::load(sv_model));
      state->backends["ngram"] = std::make_shared<ccac::NGramBackend>(model);
      state->default_backend = "ngram";
      state->model_hash = model->content_hash();
      if (!sv_backend_url.empty()) state->backends["remote"] = std::make_shared<ccac::HttpBackend>(sv_backend_url);
      if (!sv_embeddings.empty()) {
        state->embeddings = std::make_shared<const ccac::EmbeddingTable>(ccac::EmbeddingTable::load(sv_embeddings));
      }
      ccac::service::Server server(state);
      if (!sv_static.empty() && !server.mount_static(sv_static)) {
        throw ccac::Error(ccac::Errc::Io, "cannot serve " + sv_static);
      }
      std::cerr << json{{"listening", sv_host + ":" + std::to_string(sv_port)}, {"model_hash", state->model_hash}}.dump()
                << "\n";
      if (!server.listen(sv_host, sv_port)) {
        throw ccac::Error(ccac::Errc::Io, "cannot listen on " + sv_host + ":" + std::to_string(sv_port));
      }
    } else if (*bn) {
      auto backend = open_backend(bn_backend);
      auto cfg = bn_gen.config();
      if (!cfg.rng_seed) cfg.rng_seed = 0;
      std::cout << ccac::bench_generation(*backend, bn_prefix, cfg, bn_repeats).to_json().dump() << "\n";
    } else if (*pr) {
      std::vector<std::string> examples;
      for (const auto& s : ccac::read_sentence_file(pr_train)) examples.push_back(ccac::text::join(s));
      auto doc = ccac::build_fewshot_prompt(examples, pr_instruction, pr_k, pr_seed);
      ccac::text::write_file(pr_out, doc.to_json().dump(2) + "\n");
      std::cout << json{{"out", pr_out}, {"examples", doc.examples.size()}}.dump() << "\n";
    }
  } catch (const ccac::Error& e) {
    std::cerr << json{{"error", ccac::errc_name(e.code())}, {"message", e.detail()}}.dump() << "\n";
    return ccac::errc_exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }
  return 0;
}
