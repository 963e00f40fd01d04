#include "crisisfuse/fusion.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "crisisfuse/digest.hpp"
#include "crisisfuse/error.hpp"
#include "crisisfuse/text.hpp"

namespace crisisfuse {

std::string_view to_string(FusionMethod m) noexcept {
  switch (m) {
    case FusionMethod::prompt_and_select: return "prompt_and_select";
    case FusionMethod::fuse_plain: return "fuse_plain";
    case FusionMethod::fuse_eval: return "fuse_eval";
    case FusionMethod::fuse_eval_instruct: return "fuse_eval_instruct";
    case FusionMethod::fuse_eval_weight: return "fuse_eval_weight";
  }
  return "fuse_plain";
}

FusionMethod parse_fusion_method(std::string_view s) {
  for (auto m : {FusionMethod::prompt_and_select, FusionMethod::fuse_plain, FusionMethod::fuse_eval,
                 FusionMethod::fuse_eval_instruct, FusionMethod::fuse_eval_weight}) {
    if (s == to_string(m)) return m;
  }
  fail(ErrorKind::InvalidArgument, fmt::format("unknown fusion method '{}'", s));
}

std::string_view to_string(SelectionMode m) noexcept {
  return m == SelectionMode::deterministic ? "deterministic" : "llm";
}

SelectionMode parse_selection_mode(std::string_view s) {
  if (s == "deterministic") return SelectionMode::deterministic;
  if (s == "llm") return SelectionMode::llm;
  fail(ErrorKind::ConfigError, fmt::format("selection mode '{}' not in {{deterministic, llm}}", s));
}

void FusionInput::validate() const {
  if (text::trim(candidate_1.text).empty() || text::trim(candidate_2.text).empty()) {
    fail(ErrorKind::InvalidArgument, "fusion candidates must be non-empty");
  }
  scores_1.validate();
  scores_2.validate();
  weights.validate();
}

std::string format_scores(const ScoreVector& s) {
  return fmt::format("{}: {:.2f}, {}: {:.2f}, {}: {:.2f}", label(Dimension::professionalism), s.professionalism,
                     label(Dimension::actionability), s.actionability, label(Dimension::relevance), s.relevance);
}

std::string format_percent(double weight) {
  double pct = std::round(weight * 10000.0) / 100.0;
  auto out = fmt::format("{:.2f}", pct);
  while (out.back() == '0') out.pop_back();
  if (out.back() == '.') out.pop_back();
  return out;
}

namespace {

std::array<Dimension, 2> top_two(const std::array<double, 3>& diff) {
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return diff[a] > diff[b] + 1e-12;
  });
  return {kDimensions[order[0]], kDimensions[order[1]]};
}

}  // namespace

StrengthSlots strength_slots(const ScoreVector& s1, const ScoreVector& s2) {
  std::array<double, 3> d1{}, d2{};
  for (std::size_t i = 0; i < 3; ++i) {
    d1[i] = s1[kDimensions[i]] - s2[kDimensions[i]];
    d2[i] = -d1[i];
  }
  return {top_two(d1), top_two(d2)};
}

CandidateResponse select_by_quality(const FusionInput& in) {
  in.validate();
  double q1 = overall_quality(in.scores_1, in.weights);
  double q2 = overall_quality(in.scores_2, in.weights);
  return q2 > q1 ? in.candidate_2 : in.candidate_1;
}

// ---------------------------------------------------------------------------
// Fuser

Fuser::Fuser(ChatProvider& provider, const TemplateLibrary& templates, FusionOptions options)
    : provider_(provider), templates_(templates), options_(std::move(options)) {
  options_.decoding.validate();
  if (!(options_.selection_threshold >= 0.0 && options_.selection_threshold <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "selection_threshold must lie in [0, 1]");
  }
}

RenderedPrompt Fuser::render(FusionMethod method, const FusionInput& in) const {
  in.validate();
  Bindings b{{"response1", in.candidate_1.text}, {"response2", in.candidate_2.text}};
  if (method != FusionMethod::fuse_plain) {
    b["scores1"] = format_scores(in.scores_1);
    b["scores2"] = format_scores(in.scores_2);
  }
  if (method == FusionMethod::fuse_eval_instruct) {
    auto slots = strength_slots(in.scores_1, in.scores_2);
    b["retain_1"] = std::string(to_string(slots.response_1[0]));
    b["retain_2"] = std::string(to_string(slots.response_1[1]));
    b["incorporate_1"] = std::string(to_string(slots.response_2[0]));
    b["incorporate_2"] = std::string(to_string(slots.response_2[1]));
  }
  if (method == FusionMethod::fuse_eval_weight) {
    b["weight_professionalism"] = format_percent(in.weights.professionalism);
    b["weight_actionability"] = format_percent(in.weights.actionability);
    b["weight_relevance"] = format_percent(in.weights.relevance);
  }
  return templates_.get(to_string(method)).render(b);
}

CandidateResponse Fuser::prompt_and_select(const FusionInput& in) {
  if (options_.selection == SelectionMode::deterministic) return select_by_quality(in);

  auto prompt = render(FusionMethod::prompt_and_select, in);
  auto reply = provider_.complete(provider_.make_request(prompt.system, prompt.user, options_.decoding));
  auto chosen = text::trim(reply.text);
  double d1 = text::normalized_edit_distance(chosen, text::trim(in.candidate_1.text));
  double d2 = text::normalized_edit_distance(chosen, text::trim(in.candidate_2.text));
  if (std::min(d1, d2) > options_.selection_threshold) {
    fail(ErrorKind::SelectionAmbiguous,
         fmt::format("selection reply matches neither candidate (distances {:.3f}, {:.3f})", d1, d2));
  }
  return d2 < d1 ? in.candidate_2 : in.candidate_1;
}

CandidateResponse Fuser::fuse(FusionMethod method, const FusionInput& in) {
  auto prompt = render(method, in);
  auto reply = provider_.complete(provider_.make_request(prompt.system, prompt.user, options_.decoding));
  CandidateResponse out;
  out.text = text::trim(reply.text);
  out.strategy = Strategy::fused;
  out.decoding = options_.decoding;
  out.refusal = options_.refusal.matches(out.text);
  return out;
}

CandidateResponse Fuser::fuse_plain(const FusionInput& in) { return fuse(FusionMethod::fuse_plain, in); }
CandidateResponse Fuser::fuse_eval(const FusionInput& in) { return fuse(FusionMethod::fuse_eval, in); }
CandidateResponse Fuser::fuse_eval_instruct(const FusionInput& in) {
  return fuse(FusionMethod::fuse_eval_instruct, in);
}
CandidateResponse Fuser::fuse_eval_weight(const FusionInput& in) { return fuse(FusionMethod::fuse_eval_weight, in); }

CandidateResponse Fuser::apply(FusionMethod method, const FusionInput& in) {
  if (method == FusionMethod::prompt_and_select) return prompt_and_select(in);
  return fuse(method, in);
}

// ---------------------------------------------------------------------------
// Iteration

IterationTrace iterative_fuse(const NeedQuery& need, const CandidateResponse& ip, const ScoreVector& ip_scores,
                              const CandidateResponse& rag, const ScoreVector& rag_scores, FusionMethod method,
                              const DimensionWeights& weights, Fuser& fuser, const CandidateScorer& score,
                              const IterationSchedule& schedule) {
  if (schedule.max_iter < 1) fail(ErrorKind::InvalidArgument, "max_iter must be >= 1");

  auto step = [&](const CandidateResponse& a, const ScoreVector& sa, const CandidateResponse& b,
                  const ScoreVector& sb) {
    auto out = fuser.apply(method, {a, b, sa, sb, weights});
    auto s = score(out);
    spdlog::debug("fusion need={} method={} in=({}, {}) out={} before=({:.2f}, {:.2f}) after={:.2f}", need.id,
                  to_string(method), sha256_hex(a.text).substr(0, 12), sha256_hex(b.text).substr(0, 12),
                  sha256_hex(out.text).substr(0, 12), overall_quality(sa, weights), overall_quality(sb, weights),
                  overall_quality(s, weights));
    return std::pair{std::move(out), s};
  };

  IterationTrace trace;
  auto [first, first_scores] = step(ip, ip_scores, rag, rag_scores);
  trace.steps.push_back({1, std::move(first), first_scores});
  for (int k = 2; k <= schedule.max_iter; ++k) {
    const auto& prev = trace.steps.back();
    auto [mid, mid_scores] = step(prev.candidate, prev.scores, rag, rag_scores);
    if (schedule.refuse_with_ip) {
      auto [next, next_scores] = step(mid, mid_scores, ip, ip_scores);
      trace.steps.push_back({k, std::move(next), next_scores});
    } else {
      trace.steps.push_back({k, std::move(mid), mid_scores});
    }
  }
  return trace;
}

}  // namespace crisisfuse
