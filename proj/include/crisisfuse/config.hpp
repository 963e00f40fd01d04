#pragma once

#include <chrono>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisfuse/evaluation.hpp"
#include "crisisfuse/fusion.hpp"
#include "crisisfuse/knowledge_base.hpp"
#include "crisisfuse/metrics.hpp"
#include "crisisfuse/provider.hpp"

namespace crisisfuse {

struct ChatBackendSettings {
  std::string id;
  std::string endpoint;
  std::string model;
  std::string api_key_env;
  DecodingParams decoding;
  std::chrono::seconds timeout{120};
};

struct EmbedderSettings {
  std::string kind = "hashing";  // hashing | http
  std::string id = "embedder";
  std::string endpoint;
  std::string model = "all-mpnet-base-v2";
  std::string api_key_env;
  std::size_t dimension = 256;  // hashing only
};

/// Run configuration. The file format is one `section.key = value` per line
/// with `#` comments; unknown keys are rejected. Relative paths resolve
/// against the directory of the file that set them.
struct RunConfig {
  ChatBackendSettings generator{"generator", "http://localhost:8000/v1", "meta-llama/Llama-3.1-8B-Instruct",
                                "CRISISFUSE_API_KEY", DecodingParams{}, std::chrono::seconds{120}};
  ChatBackendSettings judge{"judge", "https://api.openai.com/v1", "gpt-4o-mini", "OPENAI_API_KEY",
                            DecodingParams::judge_defaults(), std::chrono::seconds{120}};
  EmbedderSettings embedder;
  std::filesystem::path cache_dir = "cache";
  RetryPolicy retry;

  DimensionWeights weights;
  int max_iter = 3;
  std::size_t parallelism = 8;
  double failure_budget = 0.05;
  std::size_t top_n = 5;
  int judge_retries = 2;
  SelectionMode selection = SelectionMode::deterministic;
  double selection_threshold = 0.3;
  RelevanceAggregation relevance = RelevanceAggregation::greedy_f1;
  std::string event = "hurricane";

  ChunkingOptions chunking;
  std::filesystem::path asset_dir;
  std::vector<std::string> classifiers{"keyword", "keyword", "keyword"};

  RunConfig();

  static RunConfig load(const std::filesystem::path& path);

  /// Sets one `section.key`; throws ConfigError for an unknown key or bad value.
  void set(std::string_view key, std::string_view value, const std::filesystem::path& base_dir = {});
  /// Applies `key=value` strings, e.g. from repeated --set flags.
  void apply_overrides(std::span<const std::string> assignments);
  /// Validates cross-field constraints; throws ConfigError.
  void validate() const;

  nlohmann::json to_json() const;
  /// Digest over the generator, judge and embedder settings.
  std::string provider_digest() const;

  static std::vector<std::string> known_keys();
};

}  // namespace crisisfuse
