#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace crisisfuse {

enum class Dimension { professionalism, actionability, relevance };

inline constexpr std::array<Dimension, 3> kDimensions{
    Dimension::professionalism, Dimension::actionability, Dimension::relevance};

std::string_view to_string(Dimension d) noexcept;
/// Capitalized label used in prompts and report headers ("Professionalism").
std::string_view label(Dimension d) noexcept;
Dimension parse_dimension(std::string_view name);

/// Professionalism / actionability / relevance triple, each in [0, 1].
struct ScoreVector {
  double professionalism = 0.0;
  double actionability = 0.0;
  double relevance = 0.0;

  double operator[](Dimension d) const noexcept;
  double& operator[](Dimension d) noexcept;
  bool in_unit_range() const noexcept;
  /// Throws InvalidArgument when any component leaves [0, 1].
  void validate() const;

  friend bool operator==(const ScoreVector&, const ScoreVector&) = default;
};

/// Non-negative dimension weights summing to one.
struct DimensionWeights {
  double professionalism = 0.4;
  double actionability = 0.4;
  double relevance = 0.2;

  double operator[](Dimension d) const noexcept;
  /// Throws InvalidWeights unless every weight is >= 0 and the sum is 1 within 1e-9.
  void validate() const;
};

/// Judge output on the 0/1/2 rubric scale.
struct RubricScore {
  int raw = 0;
  Dimension dimension = Dimension::professionalism;
};

struct DimensionSummary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

struct DimensionStats {
  DimensionSummary professionalism;
  DimensionSummary actionability;
  DimensionSummary relevance;

  const DimensionSummary& operator[](Dimension d) const noexcept;
  ScoreVector means() const noexcept;
  std::array<double, 3> sds() const noexcept;
};

struct ConsistencyReport {
  std::string group;
  DimensionStats stats;
  double variation = 0.0;
  double consistency = 1.0;
  double overall_quality = 0.0;
};

/// Maps raw rubric 0/1/2 onto 0, 0.5, 1. Throws InvalidRubric otherwise.
double normalize_rubric(const RubricScore& score);

/// Weighted mean of the three dimension means.
double overall_quality(const ScoreVector& means, const DimensionWeights& weights);

/// Per-dimension arithmetic mean and population standard deviation.
/// Throws EmptySample for an empty span.
DimensionStats dimension_stats(std::span<const ScoreVector> samples);

/// Mean of the three per-dimension dispersions. The dispersion used throughout
/// is the standard deviation, which is what reproduces published consistency values.
double variation(double sd_professionalism, double sd_actionability, double sd_relevance);
double variation(const std::array<double, 3>& sds);

double consistency_score(double variation_value);

/// dimension_stats -> variation -> consistency -> overall quality, in one pass.
ConsistencyReport consistency_report(std::string group, std::span<const ScoreVector> samples,
                                     const DimensionWeights& weights);

}  // namespace crisisfuse
