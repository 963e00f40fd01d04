#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crisisfuse {

enum class ErrorKind {
  // metrics
  InvalidRubric,
  InvalidWeights,
  EmptySample,
  InvalidDispersion,
  InvalidArgument,
  // knowledge base
  IngestError,
  EmptyCorpus,
  EmptyQuery,
  IndexNotReady,
  IndexFormat,
  DegenerateEmbedding,
  EmptyContext,
  // providers
  ProviderError,
  ReplayMiss,
  EmbeddingDimError,
  ConfigError,
  // generation / evaluation / fusion
  TemplateError,
  NoScoreFound,
  JudgeParseError,
  DegenerateText,
  SelectionAmbiguous,
  // harness
  IoError,
  DatasetError,
  DetectorError,
  EmptyAggregate,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Library-wide exception. `kind()` identifies the failure class; `transient()`
/// marks provider failures that a retry may clear (timeouts, 429, 5xx).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, bool transient = false);

  ErrorKind kind() const noexcept { return kind_; }
  bool transient() const noexcept { return transient_; }

 private:
  ErrorKind kind_;
  bool transient_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace crisisfuse
