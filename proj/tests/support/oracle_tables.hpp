#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace crisisfuse::test_support {

/// One published row: per-dimension means and sds with the derived columns.
struct PublishedRow {
  std::string_view table;
  std::string_view name;
  double mean[3];
  double sd[3];
  double overall;
  double consistency;
};

inline const std::vector<PublishedRow>& table1_rows() {
  static const std::vector<PublishedRow> rows{
      {"T1 Llama", "IP", {.74, .52, .80}, {.33, .36, .02}, .66, .76},
      {"T1 Llama", "RAG", {.96, .63, .80}, {.14, .33, .02}, .80, .84},
      {"T1 Llama", "RAG-PE", {.94, .50, .80}, {.19, .14, .02}, .74, .88},
      {"T1 Llama", "P&S", {.50, .98, .79}, {.50, .14, .02}, .75, .78},
      {"T1 Llama", "FusionWo", {.55, .97, .79}, {.27, .16, .02}, .77, .85},
      {"T1 Llama", "FusionW", {.98, .77, .79}, {.10, .27, .02}, .86, .87},
      {"T1 Llama", "E&I", {.92, .99, .79}, {.19, .07, .02}, .92, .91},
      {"T1 Llama", "E&W", {.99, .99, .79}, {.07, .09, .02}, .95, .94},
      {"T1 Mistral", "IP", {.87, .98, .79}, {.34, .15, .02}, .90, .83},
      {"T1 Mistral", "RAG", {.87, .97, .81}, {.22, .11, .03}, .90, .88},
      {"T1 Mistral", "RAG-PE", {.76, .96, .80}, {.26, .15, .02}, .85, .86},
      {"T1 Mistral", "P&S", {.75, .81, .80}, {.39, .39, .03}, .78, .73},
      {"T1 Mistral", "FusionWo", {.93, 1.00, .80}, {.25, .04, .02}, .93, .90},
      {"T1 Mistral", "FusionW", {.92, 1.00, .80}, {.28, .08, .02}, .93, .87},
      {"T1 Mistral", "E&I", {.96, 1.00, .80}, {.13, .05, .02}, .94, .93},
      {"T1 Mistral", "E&W", {.97, 1.00, .80}, {.13, .08, .02}, .95, .92},
  };
  return rows;
}

inline const std::vector<PublishedRow>& table3_rows() {
  static const std::vector<PublishedRow> rows{
      {"T3", "Evacuation", {1, 1, .80}, {0, 0, .02}, .96, .99},
      {"T3", "Food", {1, 1, .80}, {0, 0, .01}, .96, 1.00},
      {"T3", "Others", {1, .97, .81}, {0, .18, .02}, .95, .93},
      {"T3", "Rescue", {.98, .98, .80}, {.14, .14, .02}, .94, .90},
      {"T3", "Shelter", {1, 1, .80}, {0, 0, .02}, .96, .99},
      {"T3", "Average", {.99, .98, .80}, {.10, .14, .02}, .95, .91},
  };
  return rows;
}

inline const std::vector<PublishedRow>& table5_rows() {
  static const std::vector<PublishedRow> rows{
      {"T5", "IP", {.93, .94, .79}, {.24, .23, .02}, .91, .84},
      {"T5", "RAG", {.94, .97, .77}, {.23, .12, .02}, .92, .88},
      {"T5", "RAG-PE", {.76, .72, .77}, {.39, .40, .02}, .75, .73},
      {"T5", "P&S", {.97, .98, .77}, {.12, .12, .02}, .93, .91},
      {"T5", "FusionWo", {.96, .97, .78}, {.21, .13, .02}, .93, .88},
      {"T5", "FusionW", {.98, .98, .78}, {.10, .11, .02}, .94, .92},
      {"T5", "E&I", {.96, .97, .78}, {.15, .15, .02}, .93, .89},
      {"T5", "E&W", {1.00, .99, .78}, {0, .11, .02}, .95, .96},
  };
  return rows;
}

/// Judge replies and the score each must parse to; nullopt means NoScoreFound.
struct ParseCase {
  std::string_view reply;
  std::optional<int> expected;
};

inline const std::vector<ParseCase>& rubric_parse_cases() {
  static const std::vector<ParseCase> cases{
      {"0", 0},
      {"2", 2},
      {"  1\n", 1},
      {"I assign 2 because it lists FEMA contacts.", 2},
      {"Score: 1 \xE2\x80\x94 the response names organizations but gives no contacts.", 1},
      {"3/3 perfect", std::nullopt},
      {"The response is excellent.", std::nullopt},
      {"", std::nullopt},
      {"Step2 is missing, so 1", 1},
      {"1st place overall, but 0 here", 0},
      {"Score: 2.0", 2},
      {"1.5 rounds down to 1", 1},
      {"-1 is not allowed; 2 is", 2},
      {"Rated 5 out of 10, so 0", 0},
      {"02", 2},
      {"Score: 7", std::nullopt},
      {"**1**", 1},
      {"(2) Highly Professional", 2},
      {"score=1", 1},
      {"Call 911 or 311 for help", std::nullopt},
  };
  return cases;
}

}  // namespace crisisfuse::test_support
