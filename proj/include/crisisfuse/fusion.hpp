#pragma once

#include <array>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "crisisfuse/generation.hpp"
#include "crisisfuse/metrics.hpp"
#include "crisisfuse/provider.hpp"
#include "crisisfuse/templates.hpp"

namespace crisisfuse {

enum class FusionMethod { prompt_and_select, fuse_plain, fuse_eval, fuse_eval_instruct, fuse_eval_weight };
std::string_view to_string(FusionMethod m) noexcept;
FusionMethod parse_fusion_method(std::string_view s);

enum class SelectionMode { deterministic, llm };
std::string_view to_string(SelectionMode m) noexcept;
SelectionMode parse_selection_mode(std::string_view s);

struct FusionInput {
  CandidateResponse candidate_1;
  CandidateResponse candidate_2;
  ScoreVector scores_1;
  ScoreVector scores_2;
  DimensionWeights weights;

  /// Throws InvalidArgument for a blank candidate or out-of-range scores,
  /// InvalidWeights for bad weights.
  void validate() const;
};

/// "Professionalism: 0.74, Actionability: 0.52, Relevance: 0.80"
std::string format_scores(const ScoreVector& s);
/// 0.4 -> "40"; non-integral percentages keep up to two decimals ("12.5").
std::string format_percent(double weight);

struct StrengthSlots {
  std::array<Dimension, 2> response_1;
  std::array<Dimension, 2> response_2;
};

/// Response 1 keeps the two dimensions where s1 - s2 is largest, response 2
/// the two where s2 - s1 is largest. Ties (within 1e-12) go to the earlier
/// dimension in professionalism, actionability, relevance order.
StrengthSlots strength_slots(const ScoreVector& s1, const ScoreVector& s2);

struct FusionOptions {
  DecodingParams decoding;
  SelectionMode selection = SelectionMode::deterministic;
  /// Largest normalized edit distance at which an llm-mode selection reply
  /// still counts as one of the candidates.
  double selection_threshold = 0.3;
  RefusalDetector refusal = RefusalDetector::defaults();
};

class Fuser {
 public:
  Fuser(ChatProvider& provider, const TemplateLibrary& templates, FusionOptions options = {});

  RenderedPrompt render(FusionMethod method, const FusionInput& in) const;

  /// Deterministic mode picks the higher overall quality (ties to candidate 1).
  /// llm mode asks the model and maps its reply back onto a candidate; throws
  /// SelectionAmbiguous when the reply is close to neither.
  CandidateResponse prompt_and_select(const FusionInput& in);
  CandidateResponse fuse_plain(const FusionInput& in);
  CandidateResponse fuse_eval(const FusionInput& in);
  CandidateResponse fuse_eval_instruct(const FusionInput& in);
  CandidateResponse fuse_eval_weight(const FusionInput& in);

  CandidateResponse apply(FusionMethod method, const FusionInput& in);

  const FusionOptions& options() const noexcept { return options_; }

 private:
  CandidateResponse fuse(FusionMethod method, const FusionInput& in);

  ChatProvider& provider_;
  const TemplateLibrary& templates_;
  FusionOptions options_;
};

CandidateResponse select_by_quality(const FusionInput& in);

struct IterationStep {
  int iteration = 0;
  CandidateResponse candidate;
  ScoreVector scores;
};

struct IterationTrace {
  std::vector<IterationStep> steps;
};

/// Iteration 1 fuses (IP, RAG). With `refuse_with_ip`, each later iteration
/// fuses (previous, RAG) and then that result with IP; otherwise only the RAG
/// step runs.
struct IterationSchedule {
  int max_iter = 3;
  bool refuse_with_ip = true;
};

using CandidateScorer = std::function<ScoreVector(const CandidateResponse&)>;

/// Every intermediate fused text is scored before it is fused again.
IterationTrace iterative_fuse(const NeedQuery& need, const CandidateResponse& ip, const ScoreVector& ip_scores,
                              const CandidateResponse& rag, const ScoreVector& rag_scores, FusionMethod method,
                              const DimensionWeights& weights, Fuser& fuser, const CandidateScorer& score,
                              const IterationSchedule& schedule = {});

}  // namespace crisisfuse
