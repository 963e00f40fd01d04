#include "crisisfuse/config.hpp"

#include <charconv>
#include <fstream>

#include <fmt/format.h>

#include "crisisfuse/digest.hpp"
#include "crisisfuse/error.hpp"
#include "crisisfuse/text.hpp"

#ifndef CRISISFUSE_DEFAULT_ASSET_DIR
#define CRISISFUSE_DEFAULT_ASSET_DIR "assets"
#endif

namespace crisisfuse {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view why) {
  fail(ErrorKind::ConfigError, fmt::format("{} = '{}': {}", key, value, why));
}

double to_double(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    std::string s(value);
    double v = std::stod(s, &used);
    if (used != s.size()) bad_value(key, value, "not a number");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value, "not a number");
  }
}

long long to_int(std::string_view key, std::string_view value) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value, "not an integer");
  return v;
}

std::size_t to_count(std::string_view key, std::string_view value) {
  auto v = to_int(key, value);
  if (v < 0) bad_value(key, value, "must be non-negative");
  return static_cast<std::size_t>(v);
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "expected true or false");
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto comma = value.find(',', start);
    auto piece = text::trim(value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::filesystem::path resolve(std::string_view value, const std::filesystem::path& base) {
  std::filesystem::path p{std::string(value)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

bool set_chat(ChatBackendSettings& s, std::string_view field, std::string_view key, std::string_view value) {
  if (field == "id") s.id = value;
  else if (field == "endpoint") s.endpoint = value;
  else if (field == "model") s.model = value;
  else if (field == "api_key_env") s.api_key_env = value;
  else if (field == "temperature") s.decoding.temperature = to_double(key, value);
  else if (field == "top_p") s.decoding.top_p = to_double(key, value);
  else if (field == "max_new_tokens") s.decoding.max_new_tokens = static_cast<int>(to_int(key, value));
  else if (field == "sampling") s.decoding.sampling = to_bool(key, value);
  else if (field == "timeout") s.timeout = std::chrono::seconds{to_int(key, value)};
  else return false;
  return true;
}

nlohmann::json chat_json(const ChatBackendSettings& s) {
  return {{"id", s.id},
          {"endpoint", s.endpoint},
          {"model", s.model},
          {"api_key_env", s.api_key_env},
          {"decoding", s.decoding.to_json()},
          {"timeout", s.timeout.count()}};
}

}  // namespace

RunConfig::RunConfig() : asset_dir(CRISISFUSE_DEFAULT_ASSET_DIR) {}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> keys;
  for (const char* section : {"generator", "judge"}) {
    for (const char* f : {"id", "endpoint", "model", "api_key_env", "temperature", "top_p", "max_new_tokens",
                          "sampling", "timeout"}) {
      keys.push_back(fmt::format("{}.{}", section, f));
    }
  }
  for (const char* f : {"kind", "id", "endpoint", "model", "api_key_env", "dimension"}) {
    keys.push_back(fmt::format("embedder.{}", f));
  }
  for (const char* k : {"cache.dir", "retry.max_attempts", "retry.base_delay_ms", "run.weights", "run.max_iter",
                        "run.parallelism", "run.failure_budget", "run.top_n", "run.judge_retries", "run.selection",
                        "run.selection_threshold", "run.relevance", "run.event", "kb.chunk_size", "kb.overlap",
                        "assets.dir", "detect.classifiers"}) {
    keys.emplace_back(k);
  }
  return keys;
}

void RunConfig::set(std::string_view key, std::string_view value, const std::filesystem::path& base_dir) {
  auto dot = key.find('.');
  if (dot == std::string_view::npos) fail(ErrorKind::ConfigError, fmt::format("key '{}' has no section", key));
  auto section = key.substr(0, dot);
  auto field = key.substr(dot + 1);

  bool known = true;
  if (section == "generator") known = set_chat(generator, field, key, value);
  else if (section == "judge") known = set_chat(judge, field, key, value);
  else if (section == "embedder") {
    if (field == "kind") {
      if (value != "hashing" && value != "http") bad_value(key, value, "expected hashing or http");
      embedder.kind = value;
    } else if (field == "id") embedder.id = value;
    else if (field == "endpoint") embedder.endpoint = value;
    else if (field == "model") embedder.model = value;
    else if (field == "api_key_env") embedder.api_key_env = value;
    else if (field == "dimension") embedder.dimension = to_count(key, value);
    else known = false;
  } else if (key == "cache.dir") cache_dir = resolve(value, base_dir);
  else if (key == "retry.max_attempts") retry.max_attempts = static_cast<int>(to_int(key, value));
  else if (key == "retry.base_delay_ms") retry.base_delay = std::chrono::milliseconds{to_int(key, value)};
  else if (key == "run.weights") {
    auto parts = split_list(value);
    if (parts.size() != 3) bad_value(key, value, "expected three comma-separated weights");
    weights = {to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2])};
  } else if (key == "run.max_iter") max_iter = static_cast<int>(to_int(key, value));
  else if (key == "run.parallelism") parallelism = to_count(key, value);
  else if (key == "run.failure_budget") failure_budget = to_double(key, value);
  else if (key == "run.top_n") top_n = to_count(key, value);
  else if (key == "run.judge_retries") judge_retries = static_cast<int>(to_int(key, value));
  else if (key == "run.selection") selection = parse_selection_mode(value);
  else if (key == "run.selection_threshold") selection_threshold = to_double(key, value);
  else if (key == "run.relevance") relevance = parse_relevance_aggregation(value);
  else if (key == "run.event") event = value;
  else if (key == "kb.chunk_size") chunking.chunk_size = to_count(key, value);
  else if (key == "kb.overlap") chunking.overlap = to_count(key, value);
  else if (key == "assets.dir") asset_dir = resolve(value, base_dir);
  else if (key == "detect.classifiers") classifiers = split_list(value);
  else known = false;

  if (!known) fail(ErrorKind::ConfigError, fmt::format("unknown config key '{}'", key));
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, fmt::format("cannot read config {}", path.string()));
  RunConfig cfg;
  auto base = path.parent_path();
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    auto hash = line.find('#');
    auto body = text::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::ConfigError, fmt::format("{}:{}: expected section.key = value", path.string(), line_no));
    }
    try {
      cfg.set(text::trim(std::string_view(body).substr(0, eq)), text::trim(std::string_view(body).substr(eq + 1)),
              base);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  cfg.validate();
  return cfg;
}

void RunConfig::apply_overrides(std::span<const std::string> assignments) {
  for (const auto& a : assignments) {
    auto eq = a.find('=');
    if (eq == std::string::npos) fail(ErrorKind::ConfigError, fmt::format("override '{}' is not key=value", a));
    set(text::trim(std::string_view(a).substr(0, eq)), text::trim(std::string_view(a).substr(eq + 1)),
        std::filesystem::current_path());
  }
  validate();
}

void RunConfig::validate() const {
  auto wrap = [](auto&& check) {
    try {
      check();
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, e.what());
    }
  };
  wrap([&] { generator.decoding.validate(); });
  wrap([&] { judge.decoding.validate(); });
  wrap([&] { weights.validate(); });
  wrap([&] { chunking.validate(); });
  if (max_iter < 1) fail(ErrorKind::ConfigError, "run.max_iter must be >= 1");
  if (parallelism < 1) fail(ErrorKind::ConfigError, "run.parallelism must be >= 1");
  if (!(failure_budget >= 0.0 && failure_budget <= 1.0)) fail(ErrorKind::ConfigError, "run.failure_budget must lie in [0, 1]");
  if (top_n < 1) fail(ErrorKind::ConfigError, "run.top_n must be >= 1");
  if (judge_retries < 0) fail(ErrorKind::ConfigError, "run.judge_retries must be >= 0");
  if (retry.max_attempts < 1) fail(ErrorKind::ConfigError, "retry.max_attempts must be >= 1");
  if (embedder.kind == "hashing" && embedder.dimension < 1) fail(ErrorKind::ConfigError, "embedder.dimension must be >= 1");
  if (classifiers.size() != 3) fail(ErrorKind::ConfigError, "detect.classifiers must name exactly three classifiers");
}

nlohmann::json RunConfig::to_json() const {
  return {{"generator", chat_json(generator)},
          {"judge", chat_json(judge)},
          {"embedder",
           {{"kind", embedder.kind},
            {"id", embedder.id},
            {"endpoint", embedder.endpoint},
            {"model", embedder.model},
            {"api_key_env", embedder.api_key_env},
            {"dimension", embedder.dimension}}},
          {"retry", {{"max_attempts", retry.max_attempts}, {"base_delay_ms", retry.base_delay.count()}}},
          {"run",
           {{"weights", {weights.professionalism, weights.actionability, weights.relevance}},
            {"max_iter", max_iter},
            {"parallelism", parallelism},
            {"failure_budget", failure_budget},
            {"top_n", top_n},
            {"judge_retries", judge_retries},
            {"selection", to_string(selection)},
            {"selection_threshold", selection_threshold},
            {"relevance", to_string(relevance)},
            {"event", event}}},
          {"kb", {{"chunk_size", chunking.chunk_size}, {"overlap", chunking.overlap}}},
          {"detect", {{"classifiers", classifiers}}}};
}

std::string RunConfig::provider_digest() const {
  auto j = to_json();
  nlohmann::json subset{{"generator", j["generator"]}, {"judge", j["judge"]}, {"embedder", j["embedder"]}};
  return sha256_hex(subset.dump());
}

}  // namespace crisisfuse
