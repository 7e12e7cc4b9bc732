#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ccac {

enum class Errc {
  // corpus
  MissingColumn,
  BadFlag,
  EncodingError,
  Io,
  // preprocess
  TooFewSentences,
  SentenceTooLong,
  // ngram
  EmptyCorpus,
  BadModel,
  VocabMismatch,
  // generate
  EmptyPrefix,
  BackendUnavailable,
  TooFewExamples,
  InvalidConfig,
  // metrics
  EmptySequence,
  EmptyInput,
  DimensionMismatch,
  EmptySentence,
  ZeroVector,
  MalformedTable,
  MissingUnkVector,
  // harness
  WrongArity,
  EmbeddingUnavailable,
  BadFixture,
  // protocol
  SchemaViolation,
  BatchTooLarge,
};

constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::BadFlag: return "BadFlag";
    case Errc::EncodingError: return "EncodingError";
    case Errc::Io: return "Io";
    case Errc::TooFewSentences: return "TooFewSentences";
    case Errc::SentenceTooLong: return "SentenceTooLong";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::BadModel: return "BadModel";
    case Errc::VocabMismatch: return "VocabMismatch";
    case Errc::EmptyPrefix: return "EmptyPrefix";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::TooFewExamples: return "TooFewExamples";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::EmptySequence: return "EmptySequence";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptySentence: return "EmptySentence";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::MalformedTable: return "MalformedTable";
    case Errc::MissingUnkVector: return "MissingUnkVector";
    case Errc::WrongArity: return "WrongArity";
    case Errc::EmbeddingUnavailable: return "EmbeddingUnavailable";
    case Errc::BadFixture: return "BadFixture";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::BatchTooLarge: return "BatchTooLarge";
  }
  return "Unknown";
}

// Process exit status used by the CLI for each error kind. 1 is reserved for
// usage errors reported by the argument parser.
constexpr int errc_exit_code(Errc c) { return 10 + static_cast<int>(c); }

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace ccac
