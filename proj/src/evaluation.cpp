#include "crisisfuse/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include <fmt/format.h>

#include "crisisfuse/error.hpp"
#include "crisisfuse/text.hpp"

namespace crisisfuse {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_'; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

}  // namespace

int parse_rubric_reply(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size()) {
    if (!is_digit(reply[i])) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    while (i < reply.size() && is_digit(reply[i])) ++i;
    std::size_t int_end = i;
    bool fractional_zero = true;
    bool has_fraction = false;
    if (i + 1 < reply.size() && reply[i] == '.' && is_digit(reply[i + 1])) {
      has_fraction = true;
      ++i;
      while (i < reply.size() && is_digit(reply[i])) {
        if (reply[i] != '0') fractional_zero = false;
        ++i;
      }
    }

    bool glued_before = begin > 0 && (is_alpha(reply[begin - 1]) || is_digit(reply[begin - 1]));
    bool glued_after = i < reply.size() && is_alpha(reply[i]);
    bool negative = begin > 0 && reply[begin - 1] == '-' &&
                    (begin == 1 || !(is_alpha(reply[begin - 2]) || is_digit(reply[begin - 2])));
    if (glued_before || glued_after || negative || (has_fraction && !fractional_zero)) continue;

    auto digits = reply.substr(begin, int_end - begin);
    while (digits.size() > 1 && digits.front() == '0') digits.remove_prefix(1);
    if (digits.size() == 1 && digits[0] <= '2') return digits[0] - '0';
  }
  fail(ErrorKind::NoScoreFound, fmt::format("no score in {{0, 1, 2}} found in reply '{}'", reply.substr(0, 120)));
}

std::string_view to_string(RelevanceAggregation a) noexcept {
  return a == RelevanceAggregation::greedy_f1 ? "greedy_f1" : "sentence_cosine";
}

RelevanceAggregation parse_relevance_aggregation(std::string_view s) {
  if (s == "greedy_f1") return RelevanceAggregation::greedy_f1;
  if (s == "sentence_cosine") return RelevanceAggregation::sentence_cosine;
  fail(ErrorKind::ConfigError, fmt::format("unknown relevance aggregation '{}'", s));
}

GreedyMatch greedy_f1(std::span<const Embedding> candidate, std::span<const Embedding> reference) {
  if (candidate.empty() || reference.empty()) fail(ErrorKind::DegenerateText, "greedy matching needs tokens on both sides");
  std::vector<std::vector<double>> sim(candidate.size(), std::vector<double>(reference.size()));
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) sim[i][j] = cosine(candidate[i], reference[j]);
  }
  GreedyMatch m;
  for (std::size_t i = 0; i < candidate.size(); ++i) m.precision += *std::max_element(sim[i].begin(), sim[i].end());
  m.precision /= static_cast<double>(candidate.size());
  for (std::size_t j = 0; j < reference.size(); ++j) {
    double best = sim[0][j];
    for (std::size_t i = 1; i < candidate.size(); ++i) best = std::max(best, sim[i][j]);
    m.recall += best;
  }
  m.recall /= static_cast<double>(reference.size());
  double denom = m.precision + m.recall;
  m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
  return m;
}

double relevance(std::string_view need, std::string_view response, Embedder& embedder, const RelevanceConfig& config) {
  auto clamp = [](double v) { return std::clamp(v, 0.0, 1.0); };
  if (config.aggregation == RelevanceAggregation::sentence_cosine) {
    if (text::tokenize(need).empty() || text::tokenize(response).empty()) {
      fail(ErrorKind::DegenerateText, "relevance needs non-empty need and response");
    }
    std::vector<std::string> batch{std::string(response), std::string(need)};
    auto v = embedder.embed(batch);
    return clamp(cosine(v[0], v[1]));
  }

  auto cand_tokens = text::tokenize(response);
  auto ref_tokens = text::tokenize(need);
  if (cand_tokens.empty() || ref_tokens.empty()) {
    fail(ErrorKind::DegenerateText, "relevance needs tokens in both need and response");
  }
  std::map<std::string, std::size_t> unique;
  std::vector<std::string> batch;
  for (const auto* list : {&cand_tokens, &ref_tokens}) {
    for (const auto& t : *list) {
      if (unique.emplace(t, batch.size()).second) batch.push_back(t);
    }
  }
  auto vectors = embedder.embed(batch);
  auto lookup = [&](const std::vector<std::string>& tokens) {
    std::vector<Embedding> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(vectors[unique.at(t)]);
    return out;
  };
  return clamp(greedy_f1(lookup(cand_tokens), lookup(ref_tokens)).f1);
}

// ---------------------------------------------------------------------------
// Evaluator

Evaluator::Evaluator(ChatProvider& judge, const TemplateLibrary& templates, Embedder& embedder,
                     EvaluatorOptions options)
    : judge_(judge), templates_(templates), embedder_(embedder), options_(options) {
  options_.judge_decoding.validate();
  if (options_.judge_retries < 0) fail(ErrorKind::InvalidArgument, "judge_retries must be >= 0");
}

JudgeRubric Evaluator::rubric(Dimension dimension) const {
  if (dimension == Dimension::relevance) {
    fail(ErrorKind::InvalidArgument, "relevance is scored by embedding similarity, not a rubric judge");
  }
  const auto& tmpl = templates_.get(fmt::format("judge_{}", to_string(dimension)));
  auto format = tmpl.meta("reply_format", "score_only") == "score_plus_justification"
                    ? ReplyFormat::score_plus_justification
                    : ReplyFormat::score_only;
  return {dimension, &tmpl, format};
}

RenderedPrompt Evaluator::render_judge(Dimension dimension, std::string_view need, std::string_view response) const {
  return rubric(dimension).prompt->render({{"need", std::string(need)}, {"response", std::string(response)}});
}

JudgeResult Evaluator::judge(Dimension dimension, std::string_view need, std::string_view response) {
  auto prompt = render_judge(dimension, need, response);
  std::string user = prompt.user;
  std::string last_reply;
  for (int attempt = 1; attempt <= options_.judge_retries + 1; ++attempt) {
    auto reply = judge_.complete(judge_.make_request(prompt.system, user, options_.judge_decoding));
    last_reply = reply.text;
    try {
      int raw = parse_rubric_reply(reply.text);
      auto trimmed = text::trim(reply.text);
      return {RubricScore{raw, dimension}, reply.text, trimmed.size() == 1 ? "exact" : "scan", attempt};
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoScoreFound) throw;
    }
    user += "\n\nYour previous reply was:\n" + reply.text + "\n\nReply with a single digit: 0, 1, or 2.";
  }
  fail(ErrorKind::JudgeParseError,
       fmt::format("{} judge gave no usable score after {} attempts; last reply: '{}'", to_string(dimension),
                   options_.judge_retries + 1, last_reply.substr(0, 120)));
}

double Evaluator::relevance(std::string_view need, std::string_view response) {
  return crisisfuse::relevance(need, response, embedder_, options_.relevance);
}

EvaluationRecord Evaluator::evaluate(std::string_view need, std::string_view response) {
  EvaluationRecord r;
  r.professionalism = judge(Dimension::professionalism, need, response);
  r.actionability = judge(Dimension::actionability, need, response);
  r.relevance = relevance(need, response);
  r.scores = {normalize_rubric(r.professionalism.score), normalize_rubric(r.actionability.score), r.relevance};
  r.scores.validate();
  return r;
}

ScoreVector Evaluator::score_vector(std::string_view need, std::string_view response) {
  return evaluate(need, response).scores;
}

}  // namespace crisisfuse
