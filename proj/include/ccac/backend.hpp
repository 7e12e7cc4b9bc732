#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ccac/error.hpp"
#include "ccac/ngram.hpp"
#include "ccac/vocab.hpp"

namespace ccac {

// Word-level language model as seen by the decoder and the evaluators.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string name() const = 0;
  virtual const Vocabulary& vocab() const = 0;

  // Distribution over vocab() for the word after `context_words`.
  virtual std::vector<double> next(std::span<const std::string> context_words) const = 0;

  // One ScoredSequence per sentence: <sos>, words, <eos>.
  virtual std::vector<ScoredSequence> logprobs(
      const std::vector<std::vector<std::string>>& sentences) const = 0;

  // False for models that cannot be trusted to end a sentence; the decoder
  // then never selects <eos> and always fills the word budget.
  virtual bool eos_reliable() const { return true; }
};

class NGramBackend final : public Backend {
 public:
  explicit NGramBackend(std::shared_ptr<const NGramModel> model, std::string name = "ngram")
      : model_(std::move(model)), name_(std::move(name)) {}

  std::string name() const override { return name_; }
  const Vocabulary& vocab() const override { return model_->vocab(); }

  std::vector<double> next(std::span<const std::string> context_words) const override {
    return model_->next_dist(context_words);
  }

  std::vector<ScoredSequence> logprobs(
      const std::vector<std::vector<std::string>>& sentences) const override {
    std::vector<ScoredSequence> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) out.push_back(model_->score(s));
    return out;
  }

  const NGramModel& model() const { return *model_; }

 private:
  std::shared_ptr<const NGramModel> model_;
  std::string name_;
};

}  // namespace ccac
