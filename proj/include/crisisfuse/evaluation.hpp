#pragma once

#include <span>
#include <string>
#include <string_view>

#include "crisisfuse/embedding.hpp"
#include "crisisfuse/metrics.hpp"
#include "crisisfuse/provider.hpp"
#include "crisisfuse/templates.hpp"

namespace crisisfuse {

enum class ReplyFormat { score_only, score_plus_justification };

struct JudgeRubric {
  Dimension dimension = Dimension::professionalism;
  const PromptTemplate* prompt = nullptr;
  ReplyFormat format = ReplyFormat::score_only;
};

struct JudgeResult {
  RubricScore score;
  std::string reply;         // verbatim reply that produced the score
  std::string parse_method;  // "exact" or "scan"
  int attempts = 1;
};

/// Returns the first standalone number token in {0, 1, 2}, scanning left to
/// right. Tokens glued to letters ("Step2", "1st") are not standalone;
/// integral decimals ("2.0") count, others ("1.5") and negatives do not.
/// Throws NoScoreFound.
int parse_rubric_reply(std::string_view reply);

enum class RelevanceAggregation { greedy_f1, sentence_cosine };
std::string_view to_string(RelevanceAggregation a) noexcept;
RelevanceAggregation parse_relevance_aggregation(std::string_view s);

struct RelevanceConfig {
  RelevanceAggregation aggregation = RelevanceAggregation::greedy_f1;
};

struct GreedyMatch {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// BERTScore-style greedy matching without idf weighting or baseline rescaling.
/// precision averages, over candidate vectors, the best cosine to any reference
/// vector; recall the reverse. F1 is 0 when P + R <= 0.
GreedyMatch greedy_f1(std::span<const Embedding> candidate, std::span<const Embedding> reference);

/// Similarity of `response` to `need`, clamped to [0, 1]. Throws DegenerateText
/// when either side tokenizes to nothing.
double relevance(std::string_view need, std::string_view response, Embedder& embedder,
                 const RelevanceConfig& config = {});

struct EvaluatorOptions {
  DecodingParams judge_decoding = DecodingParams::judge_defaults();
  int judge_retries = 2;
  RelevanceConfig relevance;
};

struct EvaluationRecord {
  JudgeResult professionalism;
  JudgeResult actionability;
  double relevance = 0.0;
  ScoreVector scores;
};

/// Rubric judges for professionalism and actionability plus embedding relevance.
class Evaluator {
 public:
  Evaluator(ChatProvider& judge, const TemplateLibrary& templates, Embedder& embedder, EvaluatorOptions options = {});

  JudgeRubric rubric(Dimension dimension) const;
  RenderedPrompt render_judge(Dimension dimension, std::string_view need, std::string_view response) const;

  /// Re-asks up to judge_retries times when the reply has no score, then
  /// throws JudgeParseError.
  JudgeResult judge(Dimension dimension, std::string_view need, std::string_view response);
  double relevance(std::string_view need, std::string_view response);
  EvaluationRecord evaluate(std::string_view need, std::string_view response);
  ScoreVector score_vector(std::string_view need, std::string_view response);

  const EvaluatorOptions& options() const noexcept { return options_; }

 private:
  ChatProvider& judge_;
  const TemplateLibrary& templates_;
  Embedder& embedder_;
  EvaluatorOptions options_;
};

}  // namespace crisisfuse
