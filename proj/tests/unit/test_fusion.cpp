#include <functional>
#include <memory>
#include <random>
#include <regex>
#include <vector>

#include <gtest/gtest.h>

#include "crisisfuse/fusion.hpp"
#include "crisisfuse/templates.hpp"
#include "test_util.hpp"

using namespace crisisfuse;
namespace tu = crisisfuse::test_support;

namespace {

class FunctionTransport : public ChatTransport {
 public:
  explicit FunctionTransport(std::function<std::string(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
  ChatResponse send(const ChatRequest& request) override {
    requests.push_back(request);
    return {fn_(request), FinishReason::stop, 0.0, false};
  }
  std::vector<ChatRequest> requests;

 private:
  std::function<std::string(const ChatRequest&)> fn_;
};

struct Rig {
  explicit Rig(std::function<std::string(const ChatRequest&)> fn, FusionOptions options = {})
      : transport(std::make_shared<FunctionTransport>(std::move(fn))),
        provider("gen", "m", transport, std::make_shared<ResponseCache>(dir.path()), ProviderMode::live),
        templates(TemplateLibrary::load(CRISISFUSE_DEFAULT_ASSET_DIR)),
        fuser(provider, templates, options) {}

  tu::TempDir dir;
  std::shared_ptr<FunctionTransport> transport;
  ChatProvider provider;
  TemplateLibrary templates;
  Fuser fuser;
};

CandidateResponse candidate(std::string text, Strategy s) {
  CandidateResponse c;
  c.text = std::move(text);
  c.strategy = s;
  return c;
}

FusionInput sample_input() {
  return {candidate("Stay indoors and call 911 if water enters.", Strategy::instructional_prompt),
          candidate("Step 1: Go to the Red Cross shelter at 1 Main St.", Strategy::rag),
          {0.74, 0.52, 0.80},
          {0.96, 0.63, 0.80},
          {}};
}

const std::regex kMarker(R"(\{[a-z][a-z0-9_]*\})");

bool has_marker(const RenderedPrompt& p) {
  return std::regex_search(p.system, kMarker) || std::regex_search(p.user, kMarker);
}

ScoreVector random_scores(std::mt19937& rng) {
  std::uniform_int_distribution<int> rubric(0, 2);
  std::uniform_real_distribution<double> rel(0.0, 1.0);
  return {rubric(rng) / 2.0, rubric(rng) / 2.0, rel(rng)};
}

}  // namespace

TEST(FusionFormat, ScoresAndPercents) {
  EXPECT_EQ(format_scores({0.74, 0.52, 0.80}), "Professionalism: 0.74, Actionability: 0.52, Relevance: 0.80");
  EXPECT_EQ(format_scores({}), "Professionalism: 0.00, Actionability: 0.00, Relevance: 0.00");
  EXPECT_EQ(format_percent(0.4), "40");
  EXPECT_EQ(format_percent(0.2), "20");
  EXPECT_EQ(format_percent(0.125), "12.5");
  EXPECT_EQ(format_percent(1.0), "100");
}

TEST(StrengthSlots, WorkedExample) {
  auto s = strength_slots({0.98, 0.77, 0.79}, {0.55, 0.97, 0.79});
  EXPECT_EQ(s.response_1, (std::array{Dimension::professionalism, Dimension::relevance}));
  EXPECT_EQ(s.response_2, (std::array{Dimension::actionability, Dimension::relevance}));
}

TEST(StrengthSlots, TiesUseFixedOrder) {
  auto s = strength_slots({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5});
  EXPECT_EQ(s.response_1, (std::array{Dimension::professionalism, Dimension::actionability}));
  EXPECT_EQ(s.response_2, s.response_1);
}

TEST(StrengthSlots, DominatedSideGetsLeastDominated) {
  auto s = strength_slots({1.0, 0.9, 0.8}, {0.2, 0.8, 0.7});
  // s2 - s1 = (-0.8, -0.1, -0.1): the two least negative, tie broken by order.
  EXPECT_EQ(s.response_2, (std::array{Dimension::actionability, Dimension::relevance}));
}

TEST(StrengthSlots, SwapSwapsAssignments) {
  std::mt19937 rng(5);
  for (int i = 0; i < 500; ++i) {
    auto a = random_scores(rng);
    auto b = random_scores(rng);
    auto ab = strength_slots(a, b);
    auto ba = strength_slots(b, a);
    EXPECT_EQ(ab.response_1, ba.response_2);
    EXPECT_EQ(ab.response_2, ba.response_1);
  }
}

TEST(StrengthSlots, DependsOnlyOnDifference) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> shift(-0.25, 0.25);
  for (int i = 0; i < 300; ++i) {
    ScoreVector a{0.5, 0.5, 0.5}, b{0.5, 0.5, 0.5};
    for (auto d : kDimensions) {
      double delta = std::round(shift(rng) * 4) / 4;
      a[d] += delta / 2;
      b[d] -= delta / 2;
    }
    double t = std::round(shift(rng) * 8) / 8;
    ScoreVector a2 = a, b2 = b;
    for (auto d : kDimensions) {
      a2[d] += t;
      b2[d] += t;
    }
    auto s = strength_slots(a, b);
    auto s2 = strength_slots(a2, b2);
    EXPECT_EQ(s.response_1, s2.response_1);
    EXPECT_EQ(s.response_2, s2.response_2);
  }
}

TEST(Selection, DeterministicPicksHigherQuality) {
  auto in = sample_input();
  EXPECT_NEAR(overall_quality(in.scores_1, in.weights), 0.664, 1e-12);
  EXPECT_NEAR(overall_quality(in.scores_2, in.weights), 0.796, 1e-12);
  auto chosen = select_by_quality(in);
  EXPECT_EQ(chosen.text, in.candidate_2.text);
  EXPECT_EQ(chosen.strategy, Strategy::rag);
  in.scores_2 = in.scores_1;
  EXPECT_EQ(select_by_quality(in).text, in.candidate_1.text);
}

TEST(Selection, ArgmaxInvariantUnderAffineRescaling) {
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> scale(0.05, 1.0);
  std::uniform_real_distribution<double> offset(0.0, 0.5);
  for (int i = 0; i < 500; ++i) {
    auto in = sample_input();
    in.scores_1 = random_scores(rng);
    in.scores_2 = random_scores(rng);
    auto before = select_by_quality(in).strategy;
    double a = scale(rng), b = offset(rng) * (1 - a);
    for (auto d : kDimensions) {
      in.scores_1[d] = a * in.scores_1[d] + b;
      in.scores_2[d] = a * in.scores_2[d] + b;
    }
    double q1 = overall_quality(in.scores_1, in.weights), q2 = overall_quality(in.scores_2, in.weights);
    if (std::abs(q1 - q2) < 1e-9) continue;  // rounding can break an exact tie
    EXPECT_EQ(select_by_quality(in).strategy, before);
  }
}

TEST(Selection, LlmModeMapsReplyToCandidate) {
  FusionOptions opts;
  opts.selection = SelectionMode::llm;
  auto in = sample_input();
  Rig rig([&](const ChatRequest&) { return "  " + in.candidate_2.text + "\n"; }, opts);
  auto chosen = rig.fuser.prompt_and_select(in);
  EXPECT_EQ(chosen.text, in.candidate_2.text);
  EXPECT_EQ(chosen.strategy, Strategy::rag);

  Rig lost([](const ChatRequest&) { return std::string("Neither response is adequate, here is mine."); }, opts);
  EXPECT_KIND(lost.fuser.prompt_and_select(in), ErrorKind::SelectionAmbiguous);
  EXPECT_EQ(parse_selection_mode("llm"), SelectionMode::llm);
  EXPECT_KIND(parse_selection_mode("vote"), ErrorKind::ConfigError);
}

TEST(FusionRender, EveryMethodFillsAllPlaceholders) {
  Rig rig([](const ChatRequest&) { return std::string("fused"); });
  auto in = sample_input();
  for (auto m : {FusionMethod::prompt_and_select, FusionMethod::fuse_plain, FusionMethod::fuse_eval,
                 FusionMethod::fuse_eval_instruct, FusionMethod::fuse_eval_weight}) {
    auto p = rig.fuser.render(m, in);
    EXPECT_FALSE(has_marker(p)) << to_string(m);
    auto all = p.system + p.user;
    EXPECT_NE(all.find(in.candidate_1.text), std::string::npos) << to_string(m);
    EXPECT_NE(all.find(in.candidate_2.text), std::string::npos) << to_string(m);
    bool scored = m != FusionMethod::fuse_plain;
    EXPECT_EQ(all.find("Scores: " + format_scores(in.scores_1)) != std::string::npos, scored) << to_string(m);
  }
}

TEST(FusionRender, PlainHasNoScoreNumerals) {
  Rig rig([](const ChatRequest&) { return std::string("fused"); });
  auto in = sample_input();
  in.candidate_1.text = "Stay indoors.";
  in.candidate_2.text = "Go to the shelter.";
  auto p = rig.fuser.render(FusionMethod::fuse_plain, in);
  auto all = p.system + p.user;
  for (const char* n : {"0.74", "0.52", "0.80", "0.96", "0.63"}) EXPECT_EQ(all.find(n), std::string::npos) << n;
}

TEST(FusionRender, InstructSlotsAndWeights) {
  Rig rig([](const ChatRequest&) { return std::string("fused"); });
  auto in = sample_input();
  in.scores_1 = {0.98, 0.77, 0.79};
  in.scores_2 = {0.55, 0.97, 0.79};
  auto instruct = rig.fuser.render(FusionMethod::fuse_eval_instruct, in).user;
  EXPECT_NE(instruct.find("Retain the professionalism and relevance qualities"), std::string::npos);
  EXPECT_NE(instruct.find("Incorporate the actionability and relevance elements"), std::string::npos);

  auto weighted = rig.fuser.render(FusionMethod::fuse_eval_weight, in).user;
  EXPECT_NE(weighted.find("Professionalism: 40%"), std::string::npos);
  EXPECT_NE(weighted.find("Actionability: 40%"), std::string::npos);
  EXPECT_NE(weighted.find("Relevance: 20%"), std::string::npos);

  in.weights = {0.5, 0.3, 0.2};
  weighted = rig.fuser.render(FusionMethod::fuse_eval_weight, in).user;
  EXPECT_NE(weighted.find("Professionalism: 50%"), std::string::npos);
  EXPECT_NE(weighted.find("Actionability: 30%"), std::string::npos);
  EXPECT_NE(weighted.find("Relevance: 20%"), std::string::npos);
}

TEST(FusionRender, ZeroScoresAndIdenticalCandidates) {
  Rig rig([](const ChatRequest&) { return std::string("fused"); });
  auto in = sample_input();
  in.scores_1 = {};
  in.candidate_2 = in.candidate_1;
  auto p = rig.fuser.render(FusionMethod::fuse_eval, in);
  EXPECT_NE(p.user.find("Professionalism: 0.00, Actionability: 0.00, Relevance: 0.00"), std::string::npos);
  EXPECT_FALSE(has_marker(p));
}

TEST(FusionInput, Validation) {
  auto in = sample_input();
  EXPECT_NO_THROW(in.validate());
  in.candidate_1.text = "  ";
  EXPECT_KIND(in.validate(), ErrorKind::InvalidArgument);
  in = sample_input();
  in.scores_2.relevance = 1.5;
  EXPECT_KIND(in.validate(), ErrorKind::InvalidArgument);
  in = sample_input();
  in.weights = {0.5, 0.5, 0.5};
  EXPECT_KIND(in.validate(), ErrorKind::InvalidWeights);
}

TEST(Fuser, OutputTaggedFusedAndTrimmed) {
  Rig rig([](const ChatRequest&) { return std::string("\n Step 1: Merge. \n"); });
  auto out = rig.fuser.apply(FusionMethod::fuse_eval_weight, sample_input());
  EXPECT_EQ(out.text, "Step 1: Merge.");
  EXPECT_EQ(out.strategy, Strategy::fused);
  EXPECT_FALSE(out.refusal);
  EXPECT_EQ(parse_fusion_method("fuse_eval_instruct"), FusionMethod::fuse_eval_instruct);
  EXPECT_KIND(parse_fusion_method("fuse_all"), ErrorKind::InvalidArgument);
}

TEST(IterativeFuse, LengthsAndSchedule) {
  int counter = 0;
  auto in = sample_input();
  NeedQuery need{"n1", "help", "hurricane", {}};
  int scored = 0;
  CandidateScorer scorer = [&](const CandidateResponse&) {
    ++scored;
    return ScoreVector{1.0, 1.0, 0.5};
  };
  for (int max_iter : {1, 2, 3, 5}) {
    counter = 0;
    scored = 0;
    // Fresh cache per run so every fusion reaches the transport.
    Rig rig([&](const ChatRequest&) { return "fused " + std::to_string(++counter); });
    auto trace = iterative_fuse(need, in.candidate_1, in.scores_1, in.candidate_2, in.scores_2,
                                FusionMethod::fuse_eval, in.weights, rig.fuser, scorer, {max_iter, true});
    ASSERT_EQ(static_cast<int>(trace.steps.size()), max_iter);
    for (int i = 0; i < max_iter; ++i) EXPECT_EQ(trace.steps[i].iteration, i + 1);
    EXPECT_EQ(counter, 1 + 2 * (max_iter - 1));
    EXPECT_EQ(scored, counter);
  }

  counter = 0;
  Rig rig([&](const ChatRequest&) { return "fused " + std::to_string(++counter); });
  auto trace = iterative_fuse(need, in.candidate_1, in.scores_1, in.candidate_2, in.scores_2, FusionMethod::fuse_eval,
                              in.weights, rig.fuser, scorer, {3, false});
  EXPECT_EQ(trace.steps.size(), 3u);
  EXPECT_EQ(counter, 3);
  EXPECT_KIND(iterative_fuse(need, in.candidate_1, in.scores_1, in.candidate_2, in.scores_2, FusionMethod::fuse_eval,
                             in.weights, rig.fuser, scorer, {0, true}),
              ErrorKind::InvalidArgument);
}

TEST(IterativeFuse, LaterIterationsFeedPreviousThenRagThenIp) {
  Rig rig([&](const ChatRequest& r) { return "out" + std::to_string(r.user_prompt.size()); });
  auto in = sample_input();
  NeedQuery need{"n1", "help", "hurricane", {}};
  CandidateScorer scorer = [](const CandidateResponse&) { return ScoreVector{0.5, 0.5, 0.5}; };
  auto trace = iterative_fuse(need, in.candidate_1, in.scores_1, in.candidate_2, in.scores_2, FusionMethod::fuse_plain,
                              in.weights, rig.fuser, scorer, {2, true});
  const auto& reqs = rig.transport->requests;
  ASSERT_EQ(reqs.size(), 3u);
  auto first_out = trace.steps[0].candidate.text;
  // Iteration 2 step A: (previous, RAG).
  EXPECT_LT(reqs[1].user_prompt.find(first_out), reqs[1].user_prompt.find(in.candidate_2.text));
  // Iteration 2 step B: (mid, IP).
  EXPECT_NE(reqs[2].user_prompt.find(in.candidate_1.text), std::string::npos);
  EXPECT_EQ(reqs[2].user_prompt.find(in.candidate_2.text), std::string::npos);
}
