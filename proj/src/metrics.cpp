#include "crisisfuse/metrics.hpp"

#include <cmath>

#include <fmt/format.h>

#include "crisisfuse/error.hpp"

namespace crisisfuse {

std::string_view to_string(Dimension d) noexcept {
  switch (d) {
    case Dimension::professionalism: return "professionalism";
    case Dimension::actionability: return "actionability";
    case Dimension::relevance: return "relevance";
  }
  return "professionalism";
}

std::string_view label(Dimension d) noexcept {
  switch (d) {
    case Dimension::professionalism: return "Professionalism";
    case Dimension::actionability: return "Actionability";
    case Dimension::relevance: return "Relevance";
  }
  return "Professionalism";
}

Dimension parse_dimension(std::string_view name) {
  for (auto d : kDimensions) {
    if (name == to_string(d)) return d;
  }
  fail(ErrorKind::InvalidArgument, fmt::format("unknown dimension '{}'", name));
}

double ScoreVector::operator[](Dimension d) const noexcept {
  switch (d) {
    case Dimension::professionalism: return professionalism;
    case Dimension::actionability: return actionability;
    case Dimension::relevance: return relevance;
  }
  return professionalism;
}

double& ScoreVector::operator[](Dimension d) noexcept {
  switch (d) {
    case Dimension::actionability: return actionability;
    case Dimension::relevance: return relevance;
    case Dimension::professionalism: break;
  }
  return professionalism;
}

bool ScoreVector::in_unit_range() const noexcept {
  for (auto d : kDimensions) {
    double v = (*this)[d];
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

void ScoreVector::validate() const {
  if (!in_unit_range()) {
    fail(ErrorKind::InvalidArgument,
         fmt::format("score vector ({}, {}, {}) leaves [0, 1]", professionalism, actionability, relevance));
  }
}

double DimensionWeights::operator[](Dimension d) const noexcept {
  switch (d) {
    case Dimension::professionalism: return professionalism;
    case Dimension::actionability: return actionability;
    case Dimension::relevance: return relevance;
  }
  return professionalism;
}

void DimensionWeights::validate() const {
  if (!(professionalism >= 0.0 && actionability >= 0.0 && relevance >= 0.0)) {
    fail(ErrorKind::InvalidWeights, "weights must be non-negative");
  }
  double sum = professionalism + actionability + relevance;
  if (std::abs(sum - 1.0) > 1e-9) {
    fail(ErrorKind::InvalidWeights, fmt::format("weights sum to {}, expected 1", sum));
  }
}

const DimensionSummary& DimensionStats::operator[](Dimension d) const noexcept {
  switch (d) {
    case Dimension::actionability: return actionability;
    case Dimension::relevance: return relevance;
    case Dimension::professionalism: break;
  }
  return professionalism;
}

ScoreVector DimensionStats::means() const noexcept {
  return {professionalism.mean, actionability.mean, relevance.mean};
}

std::array<double, 3> DimensionStats::sds() const noexcept {
  return {professionalism.sd, actionability.sd, relevance.sd};
}

double normalize_rubric(const RubricScore& score) {
  if (score.raw < 0 || score.raw > 2) {
    fail(ErrorKind::InvalidRubric, fmt::format("raw rubric score {} outside {{0, 1, 2}}", score.raw));
  }
  return static_cast<double>(score.raw) / 2.0;
}

double overall_quality(const ScoreVector& means, const DimensionWeights& weights) {
  weights.validate();
  return weights.professionalism * means.professionalism + weights.actionability * means.actionability +
         weights.relevance * means.relevance;
}

DimensionStats dimension_stats(std::span<const ScoreVector> samples) {
  if (samples.empty()) fail(ErrorKind::EmptySample, "dimension_stats needs at least one sample");

  // Welford's update per dimension.
  std::array<double, 3> mean{};
  std::array<double, 3> m2{};
  std::size_t n = 0;
  for (const auto& s : samples) {
    ++n;
    for (std::size_t i = 0; i < 3; ++i) {
      double x = s[kDimensions[i]];
      double delta = x - mean[i];
      mean[i] += delta / static_cast<double>(n);
      m2[i] += delta * (x - mean[i]);
    }
  }
  auto summary = [&](std::size_t i) {
    double var = m2[i] / static_cast<double>(n);
    return DimensionSummary{mean[i], var > 0.0 ? std::sqrt(var) : 0.0, n};
  };
  return {summary(0), summary(1), summary(2)};
}

double variation(double sd_professionalism, double sd_actionability, double sd_relevance) {
  if (!(sd_professionalism >= 0.0 && sd_actionability >= 0.0 && sd_relevance >= 0.0)) {
    fail(ErrorKind::InvalidDispersion,
         fmt::format("dispersions ({}, {}, {}) must be non-negative", sd_professionalism, sd_actionability,
                     sd_relevance));
  }
  return (sd_professionalism + sd_actionability + sd_relevance) / 3.0;
}

double variation(const std::array<double, 3>& sds) { return variation(sds[0], sds[1], sds[2]); }

double consistency_score(double variation_value) {
  if (!(variation_value >= 0.0)) {
    fail(ErrorKind::InvalidDispersion, fmt::format("variation {} must be non-negative", variation_value));
  }
  return 1.0 - variation_value;
}

ConsistencyReport consistency_report(std::string group, std::span<const ScoreVector> samples,
                                     const DimensionWeights& weights) {
  ConsistencyReport report;
  report.group = std::move(group);
  report.stats = dimension_stats(samples);
  report.variation = variation(report.stats.sds());
  report.consistency = consistency_score(report.variation);
  report.overall_quality = overall_quality(report.stats.means(), weights);
  return report;
}

}  // namespace crisisfuse
