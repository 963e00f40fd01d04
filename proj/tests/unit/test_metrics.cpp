#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "crisisfuse/metrics.hpp"
#include "test_util.hpp"

using namespace crisisfuse;

namespace {

struct OracleStats {
  double mean[3];
  double sd[3];
};

// Two-pass textbook computation, independent of the streaming implementation.
OracleStats brute_force(const std::vector<ScoreVector>& xs) {
  OracleStats o{};
  for (int d = 0; d < 3; ++d) {
    double sum = 0.0;
    for (const auto& x : xs) sum += x[kDimensions[d]];
    o.mean[d] = sum / xs.size();
    double ss = 0.0;
    for (const auto& x : xs) ss += (x[kDimensions[d]] - o.mean[d]) * (x[kDimensions[d]] - o.mean[d]);
    o.sd[d] = std::sqrt(ss / xs.size());
  }
  return o;
}

}  // namespace

TEST(NormalizeRubric, MapsScaleOntoUnitInterval) {
  EXPECT_EQ(normalize_rubric({0, Dimension::professionalism}), 0.0);
  EXPECT_EQ(normalize_rubric({1, Dimension::actionability}), 0.5);
  EXPECT_EQ(normalize_rubric({2, Dimension::professionalism}), 1.0);
  EXPECT_KIND(normalize_rubric({3, Dimension::professionalism}), ErrorKind::InvalidRubric);
  EXPECT_KIND(normalize_rubric({-1, Dimension::actionability}), ErrorKind::InvalidRubric);
}

TEST(OverallQuality, WeightedMean) {
  EXPECT_NEAR(overall_quality({0.74, 0.52, 0.80}, {}), 0.664, 1e-12);
  EXPECT_NEAR(overall_quality({1.0, 1.0, 1.0}, {}), 1.0, 1e-12);
  EXPECT_NEAR(overall_quality({0.99, 0.99, 0.79}, {}), 0.950, 1e-12);
}

TEST(OverallQuality, RejectsBadWeights) {
  EXPECT_KIND(overall_quality({0.5, 0.5, 0.5}, {0.5, 0.5, 0.2}), ErrorKind::InvalidWeights);
  EXPECT_KIND(overall_quality({0.5, 0.5, 0.5}, {1.2, -0.2, 0.0}), ErrorKind::InvalidWeights);
}

TEST(DimensionStats, ThreePointExample) {
  std::vector<ScoreVector> xs{{0.0, 0.2, 0.3}, {0.5, 0.2, 0.3}, {1.0, 0.2, 0.3}};
  auto s = dimension_stats(xs);
  EXPECT_NEAR(s.professionalism.mean, 0.5, 1e-12);
  EXPECT_NEAR(s.professionalism.sd, std::sqrt(1.0 / 6.0), 1e-12);
  EXPECT_NEAR(s.professionalism.sd, 0.4082, 5e-5);
  EXPECT_EQ(s.actionability.sd, 0.0);
  EXPECT_EQ(s.professionalism.n, 3u);
}

TEST(DimensionStats, SingleSampleAndEmpty) {
  std::vector<ScoreVector> one{{0.3, 0.6, 0.9}};
  auto s = dimension_stats(one);
  EXPECT_EQ(s.means(), (ScoreVector{0.3, 0.6, 0.9}));
  EXPECT_EQ(s.sds(), (std::array<double, 3>{0, 0, 0}));
  EXPECT_KIND(dimension_stats({}), ErrorKind::EmptySample);
}

TEST(DimensionStats, MatchesBruteForceOnRandomSamples) {
  std::mt19937 rng(1234);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 1000);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoreVector> xs(size(rng));
    for (auto& x : xs) x = {u(rng), u(rng), u(rng)};
    auto got = dimension_stats(xs);
    auto want = brute_force(xs);
    for (int d = 0; d < 3; ++d) {
      EXPECT_NEAR(got[kDimensions[d]].mean, want.mean[d], 1e-12);
      EXPECT_NEAR(got[kDimensions[d]].sd, want.sd[d], 1e-12);
      EXPECT_LE(got[kDimensions[d]].sd, 0.5 + 1e-12);
    }
  }
}

TEST(Variation, MeanOfDispersions) {
  EXPECT_NEAR(variation(0.33, 0.36, 0.02), 0.2367, 5e-5);
  EXPECT_EQ(variation(0, 0, 0), 0.0);
  EXPECT_NEAR(variation(0.14, 0.33, 0.02), 0.1633, 5e-5);
  EXPECT_KIND(variation(-0.1, 0.2, 0.3), ErrorKind::InvalidDispersion);
}

TEST(Consistency, OneMinusVariation) {
  EXPECT_NEAR(consistency_score(0.2367), 0.7633, 1e-12);
  EXPECT_EQ(consistency_score(0.0), 1.0);
  EXPECT_NEAR(consistency_score(variation(0.00, 0.11, 0.02)), 0.9567, 5e-5);
  EXPECT_KIND(consistency_score(-0.01), ErrorKind::InvalidDispersion);
}

TEST(Consistency, PropertyOneMinusMeanOfTriple) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  for (int i = 0; i < 1000; ++i) {
    double a = u(rng), b = u(rng), c = u(rng);
    EXPECT_NEAR(consistency_score(variation(a, b, c)), 1.0 - (a + b + c) / 3.0, 1e-15);
  }
}

TEST(ConsistencyReport, BundlesStatistics) {
  std::vector<ScoreVector> xs{{1.0, 0.5, 0.8}, {0.5, 1.0, 0.8}};
  auto r = consistency_report("g", xs, {});
  EXPECT_EQ(r.group, "g");
  EXPECT_NEAR(r.variation, (0.25 + 0.25 + 0.0) / 3.0, 1e-12);
  EXPECT_NEAR(r.consistency, 1.0 - r.variation, 1e-15);
  EXPECT_NEAR(r.overall_quality, 0.4 * 0.75 + 0.4 * 0.75 + 0.2 * 0.8, 1e-12);
}

TEST(ScoreVector, ValidateRange) {
  EXPECT_NO_THROW((ScoreVector{0, 0.5, 1}.validate()));
  EXPECT_KIND((ScoreVector{1.1, 0, 0}.validate()), ErrorKind::InvalidArgument);
}
