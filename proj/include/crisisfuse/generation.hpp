#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crisisfuse/knowledge_base.hpp"
#include "crisisfuse/provider.hpp"
#include "crisisfuse/templates.hpp"

namespace crisisfuse {

enum class Detailedness { vague, medium, specific };
enum class Sentiment { neutral, emotional };
enum class Formality { casual, formal };

std::string_view to_string(Detailedness v) noexcept;
std::string_view to_string(Sentiment v) noexcept;
std::string_view to_string(Formality v) noexcept;
Detailedness parse_detailedness(std::string_view s);
Sentiment parse_sentiment(std::string_view s);
Formality parse_formality(std::string_view s);

/// Annotation metadata; consumed as input, never inferred.
struct NeedTags {
  std::string need_category;  // empty when absent
  std::optional<Detailedness> detailedness;
  std::optional<Sentiment> sentiment;
  std::optional<Formality> formality;
};

struct NeedQuery {
  std::string id;
  std::string text;
  std::string event = "hurricane";
  NeedTags tags;

  /// Throws InvalidArgument when the text is blank.
  void validate() const;
};

enum class Strategy { instructional_prompt, rag, rag_pe, few_shot, fused };
std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view s);

struct CandidateResponse {
  std::string text;
  Strategy strategy = Strategy::instructional_prompt;
  DecodingParams decoding;
  std::vector<ChunkId> retrieved_chunk_ids;
  bool refusal = false;
};

struct Exemplar {
  std::string need_category;
  std::string need;
  std::string response;
};

/// Reads JSON lines with need_category / need / response fields.
std::vector<Exemplar> load_exemplars(const std::filesystem::path& path);

/// Numbered "Example k" blocks, in order, ending with the last response.
std::string render_exemplars(std::span<const Exemplar> exemplars);

struct RefusalPattern {
  enum class Match { contains, exact };
  Match match = Match::contains;
  std::string text;
};

class RefusalDetector {
 public:
  explicit RefusalDetector(std::vector<RefusalPattern> patterns);

  /// "I can't assist", "I cannot help", "I won't provide" anywhere; "I don't know" as the whole reply.
  static RefusalDetector defaults();
  /// Parses the `contains: ...` / `exact: ...` line format.
  static RefusalDetector load(const std::filesystem::path& path);

  bool matches(std::string_view reply) const;
  const std::vector<RefusalPattern>& patterns() const noexcept { return patterns_; }

 private:
  std::vector<RefusalPattern> patterns_;
};

bool detect_refusal(std::string_view reply, const RefusalDetector& detector = RefusalDetector::defaults());

/// Candidate generation strategies over one chat provider.
class Generator {
 public:
  Generator(ChatProvider& provider, const TemplateLibrary& templates, DecodingParams decoding = {},
            RefusalDetector refusal = RefusalDetector::defaults());

  RenderedPrompt render_ip(const NeedQuery& need) const;
  RenderedPrompt render_rag(const NeedQuery& need, const std::string& context, bool prompt_engineered) const;
  RenderedPrompt render_fewshot(const NeedQuery& need, std::span<const Exemplar> exemplars) const;

  CandidateResponse generate_ip(const NeedQuery& need);
  CandidateResponse generate_rag(const NeedQuery& need, const HybridRetriever& retriever, std::size_t top_n = 5);
  CandidateResponse generate_rag_pe(const NeedQuery& need, const HybridRetriever& retriever, std::size_t top_n = 5);
  CandidateResponse generate_fewshot(const NeedQuery& need, std::span<const Exemplar> exemplars);

  const DecodingParams& decoding() const noexcept { return decoding_; }
  const RefusalDetector& refusal_detector() const noexcept { return refusal_; }

 private:
  CandidateResponse run(const RenderedPrompt& prompt, Strategy strategy, std::vector<ChunkId> chunk_ids);
  CandidateResponse generate_retrieval(const NeedQuery& need, const HybridRetriever& retriever, std::size_t top_n,
                                       bool prompt_engineered);

  ChatProvider& provider_;
  const TemplateLibrary& templates_;
  DecodingParams decoding_;
  RefusalDetector refusal_;
};

}  // namespace crisisfuse
