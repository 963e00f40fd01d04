#include "crisisfuse/error.hpp"

namespace crisisfuse {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidRubric: return "InvalidRubric";
    case ErrorKind::InvalidWeights: return "InvalidWeights";
    case ErrorKind::EmptySample: return "EmptySample";
    case ErrorKind::InvalidDispersion: return "InvalidDispersion";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IngestError: return "IngestError";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::EmptyQuery: return "EmptyQuery";
    case ErrorKind::IndexNotReady: return "IndexNotReady";
    case ErrorKind::IndexFormat: return "IndexFormat";
    case ErrorKind::DegenerateEmbedding: return "DegenerateEmbedding";
    case ErrorKind::EmptyContext: return "EmptyContext";
    case ErrorKind::ProviderError: return "ProviderError";
    case ErrorKind::ReplayMiss: return "ReplayMiss";
    case ErrorKind::EmbeddingDimError: return "EmbeddingDimError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::TemplateError: return "TemplateError";
    case ErrorKind::NoScoreFound: return "NoScoreFound";
    case ErrorKind::JudgeParseError: return "JudgeParseError";
    case ErrorKind::DegenerateText: return "DegenerateText";
    case ErrorKind::SelectionAmbiguous: return "SelectionAmbiguous";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::DatasetError: return "DatasetError";
    case ErrorKind::DetectorError: return "DetectorError";
    case ErrorKind::EmptyAggregate: return "EmptyAggregate";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message, bool transient)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      transient_(transient) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace crisisfuse
