#include "crisisfuse/provider.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "crisisfuse/digest.hpp"

namespace crisisfuse {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Requests

void DecodingParams::validate() const {
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    fail(ErrorKind::InvalidArgument, fmt::format("temperature {} outside [0, 2]", temperature));
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    fail(ErrorKind::InvalidArgument, fmt::format("top_p {} outside (0, 1]", top_p));
  }
  if (max_new_tokens < 1) {
    fail(ErrorKind::InvalidArgument, fmt::format("max_new_tokens {} < 1", max_new_tokens));
  }
}

json DecodingParams::to_json() const {
  return {{"temperature", temperature},
          {"top_p", top_p},
          {"max_new_tokens", max_new_tokens},
          {"sampling", sampling}};
}

DecodingParams DecodingParams::from_json(const json& j) {
  DecodingParams p;
  p.temperature = j.at("temperature").get<double>();
  p.top_p = j.at("top_p").get<double>();
  p.max_new_tokens = j.at("max_new_tokens").get<int>();
  p.sampling = j.at("sampling").get<bool>();
  return p;
}

DecodingParams DecodingParams::judge_defaults() { return {0.0, 1.0, 256, false}; }

json ChatRequest::to_json() const {
  return {{"provider_id", provider_id},
          {"model", model},
          {"system", system_prompt},
          {"user", user_prompt},
          {"decoding", decoding.to_json()}};
}

std::string_view to_string(FinishReason r) noexcept {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

FinishReason parse_finish_reason(std::string_view s) {
  if (s == "stop" || s == "eos" || s.empty()) return FinishReason::stop;
  if (s == "length" || s == "max_tokens") return FinishReason::length;
  return FinishReason::error;
}

CacheKey CacheKey::for_chat(const ChatRequest& request) {
  json j = request.to_json();
  j["kind"] = "chat";
  return {sha256_hex(j.dump())};
}

CacheKey CacheKey::for_embedding(const std::string& provider_id, const std::string& model, const std::string& text) {
  json j = {{"kind", "embedding"}, {"provider_id", provider_id}, {"model", model}, {"text", text}};
  return {sha256_hex(j.dump())};
}

std::string_view to_string(ProviderMode m) noexcept { return m == ProviderMode::live ? "live" : "replay"; }

ProviderMode parse_provider_mode(std::string_view s) {
  if (s == "live") return ProviderMode::live;
  if (s == "replay") return ProviderMode::replay;
  fail(ErrorKind::ConfigError, fmt::format("unknown provider mode '{}'", s));
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string base_path;
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorKind::ConfigError, fmt::format("endpoint '{}' lacks a scheme", url));
  auto path_begin = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_begin);
  out.base_path = path_begin == std::string::npos ? "" : url.substr(path_begin);
  while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  return out;
}

json post_json(const HttpEndpoint& endpoint, const std::string& route, const json& body) {
  auto url = parse_url(endpoint.url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(endpoint.timeout);
  client.set_read_timeout(endpoint.timeout);
  client.set_write_timeout(endpoint.timeout);

  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    const char* key = std::getenv(endpoint.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      fail(ErrorKind::ProviderError, fmt::format("credential variable {} is not set", endpoint.api_key_env));
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  auto result = client.Post(url.base_path + route, headers, body.dump(), "application/json");
  if (!result) {
    throw Error(ErrorKind::ProviderError,
                fmt::format("{}{}: {}", endpoint.url, route, httplib::to_string(result.error())), true);
  }
  if (result->status != 200) {
    bool transient = result->status == 429 || result->status >= 500;
    throw Error(ErrorKind::ProviderError,
                fmt::format("{}{} returned HTTP {}: {}", endpoint.url, route, result->status,
                            result->body.substr(0, 200)),
                transient);
  }
  try {
    return json::parse(result->body);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProviderError, fmt::format("malformed JSON from {}: {}", endpoint.url, e.what()), true);
  }
}

}  // namespace

HttpChatTransport::HttpChatTransport(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

json HttpChatTransport::request_body(const ChatRequest& request) {
  json messages = json::array();
  if (!request.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  messages.push_back({{"role", "user"}, {"content", request.user_prompt}});
  json body = {{"model", request.model}, {"messages", messages}, {"max_tokens", request.decoding.max_new_tokens}};
  if (request.decoding.sampling) {
    body["temperature"] = request.decoding.temperature;
    body["top_p"] = request.decoding.top_p;
  } else {
    body["temperature"] = 0.0;
  }
  return body;
}

ChatResponse HttpChatTransport::parse_reply(const std::string& body) {
  try {
    auto j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    r.text = choice.at("message").at("content").get<std::string>();
    auto reason = choice.value("finish_reason", json("stop"));
    r.finish_reason = parse_finish_reason(reason.is_string() ? reason.get<std::string>() : "stop");
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProviderError, fmt::format("unexpected chat reply shape: {}", e.what()), true);
  }
}

ChatResponse HttpChatTransport::send(const ChatRequest& request) {
  auto start = std::chrono::steady_clock::now();
  auto reply = post_json(endpoint_, "/chat/completions", request_body(request));
  auto r = parse_reply(reply.dump());
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

HttpEmbeddingTransport::HttpEmbeddingTransport(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::vector<Embedding> HttpEmbeddingTransport::parse_reply(const std::string& body, std::size_t expected) {
  std::vector<Embedding> out;
  try {
    auto j = json::parse(body);
    const auto& data = j.at("data");
    out.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::size_t index = data[i].value("index", i);
      if (index >= out.size()) fail(ErrorKind::ProviderError, "embedding index out of range");
      out[index] = data[i].at("embedding").get<Embedding>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProviderError, fmt::format("unexpected embedding reply shape: {}", e.what()), true);
  }
  if (out.size() != expected) {
    fail(ErrorKind::ProviderError, fmt::format("expected {} embeddings, got {}", expected, out.size()));
  }
  return out;
}

std::vector<Embedding> HttpEmbeddingTransport::send(const std::string& model, std::span<const std::string> texts) {
  json body = {{"model", model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  auto reply = post_json(endpoint_, "/embeddings", body);
  return parse_reply(reply.dump(), texts.size());
}

// ---------------------------------------------------------------------------
// Cache

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ResponseCache::path_for(const CacheKey& key) const {
  return dir_ / key.digest.substr(0, 2) / (key.digest + ".json");
}

std::optional<json> ResponseCache::get(const CacheKey& key) const {
  std::shared_lock lock(mutex_);
  auto path = path_for(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    auto record = json::parse(in);
    if (record.value("key", "") != key.digest) {
      fail(ErrorKind::IoError, fmt::format("cache record {} has a mismatched key header", path.string()));
    }
    return record;
  } catch (const json::exception& e) {
    fail(ErrorKind::IoError, fmt::format("corrupt cache record {}: {}", path.string(), e.what()));
  }
}

void ResponseCache::put(const CacheKey& key, const json& record) {
  std::unique_lock lock(mutex_);
  auto path = path_for(key);
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorKind::IoError, fmt::format("cannot create {}: {}", path.parent_path().string(), ec.message()));
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, fmt::format("cannot write {}", tmp.string()));
    json stamped = record;
    stamped["key"] = key.digest;
    out << stamped.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::IoError, fmt::format("cannot move {} into place: {}", path.string(), ec.message()));
}

// ---------------------------------------------------------------------------
// Retry

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

void log_attempt(int attempt, const Error& error) {
  spdlog::warn("attempt {} failed{}: {}", attempt, error.transient() ? " (transient)" : "", error.what());
}

// ---------------------------------------------------------------------------
// ChatProvider

ChatProvider::ChatProvider(std::string provider_id, std::string model, std::shared_ptr<ChatTransport> transport,
                           std::shared_ptr<ResponseCache> cache, ProviderMode mode, RetryPolicy retry,
                           Sleeper sleeper)
    : provider_id_(std::move(provider_id)),
      model_(std::move(model)),
      transport_(std::move(transport)),
      cache_(std::move(cache)),
      mode_(mode),
      retry_(retry),
      sleeper_(std::move(sleeper)) {
  if (!cache_) fail(ErrorKind::ConfigError, "chat provider needs a cache");
  if (mode_ == ProviderMode::live && !transport_) {
    fail(ErrorKind::ConfigError, fmt::format("provider '{}' is live but has no transport", provider_id_));
  }
}

ChatRequest ChatProvider::make_request(std::string system_prompt, std::string user_prompt,
                                       const DecodingParams& decoding) const {
  return {provider_id_, model_, std::move(system_prompt), std::move(user_prompt), decoding};
}

namespace {

ChatResponse response_from_record(const json& record) {
  const auto& r = record.at("response");
  ChatResponse out;
  out.text = r.at("text").get<std::string>();
  out.finish_reason = parse_finish_reason(r.value("finish_reason", "stop"));
  out.from_cache = true;
  return out;
}

}  // namespace

ChatResponse ChatProvider::complete(const ChatRequest& request) {
  request.decoding.validate();
  auto key = CacheKey::for_chat(request);
  if (auto record = cache_->get(key)) return response_from_record(*record);
  if (mode_ == ProviderMode::replay) {
    fail(ErrorKind::ReplayMiss, fmt::format("no recorded response for key {} (provider {})", key.digest, provider_id_));
  }

  std::promise<ChatResponse> promise;
  std::shared_future<ChatResponse> shared;
  bool owner = false;
  {
    std::lock_guard lock(inflight_mutex_);
    auto it = inflight_.find(key.digest);
    if (it != inflight_.end()) {
      shared = it->second;
    } else {
      shared = promise.get_future().share();
      inflight_.emplace(key.digest, shared);
      owner = true;
    }
  }
  if (!owner) {
    auto r = shared.get();
    r.from_cache = true;
    return r;
  }

  try {
    auto r = call_backend(request, key);
    promise.set_value(r);
    std::lock_guard lock(inflight_mutex_);
    inflight_.erase(key.digest);
    return r;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(inflight_mutex_);
    inflight_.erase(key.digest);
    throw;
  }
}

ChatResponse ChatProvider::call_backend(const ChatRequest& request, const CacheKey& key) {
  auto response = with_retry(
      [&] {
        ++transport_calls_;
        try {
          return transport_->send(request);
        } catch (const Error&) {
          throw;
        } catch (const std::exception& e) {
          throw Error(ErrorKind::ProviderError, e.what(), true);
        }
      },
      retry_, sleeper_);
  if (response.finish_reason == FinishReason::error) {
    fail(ErrorKind::ProviderError, fmt::format("provider {} reported an error finish", provider_id_));
  }
  json record = {{"kind", "chat"},
                 {"request", request.to_json()},
                 {"response", {{"text", response.text}, {"finish_reason", to_string(response.finish_reason)}}}};
  cache_->put(key, record);
  response.from_cache = false;
  return response;
}

// ---------------------------------------------------------------------------
// CachingEmbedder

CachingEmbedder::CachingEmbedder(std::string provider_id, std::string model,
                                 std::shared_ptr<EmbeddingTransport> transport, std::shared_ptr<ResponseCache> cache,
                                 ProviderMode mode, RetryPolicy retry, Sleeper sleeper)
    : provider_id_(std::move(provider_id)),
      model_(std::move(model)),
      transport_(std::move(transport)),
      cache_(std::move(cache)),
      mode_(mode),
      retry_(retry),
      sleeper_(std::move(sleeper)) {
  if (!cache_) fail(ErrorKind::ConfigError, "embedder needs a cache");
  if (mode_ == ProviderMode::live && !transport_) {
    fail(ErrorKind::ConfigError, fmt::format("embedder '{}' is live but has no transport", provider_id_));
  }
}

std::string CachingEmbedder::id() const { return provider_id_ + ":" + model_; }

std::vector<Embedding> CachingEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) fail(ErrorKind::InvalidArgument, "embed called with an empty batch");

  std::vector<Embedding> out(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto key = CacheKey::for_embedding(provider_id_, model_, texts[i]);
    if (auto record = cache_->get(key)) {
      out[i] = record->at("response").at("embedding").get<Embedding>();
    } else if (mode_ == ProviderMode::replay) {
      fail(ErrorKind::ReplayMiss, fmt::format("no recorded embedding for key {}", key.digest));
    } else {
      missing.push_back(i);
    }
  }

  if (!missing.empty()) {
    std::vector<std::string> batch;
    batch.reserve(missing.size());
    for (auto i : missing) batch.push_back(texts[i]);
    auto fresh = with_retry(
        [&] {
          ++transport_calls_;
          return transport_->send(model_, batch);
        },
        retry_, sleeper_);
    if (fresh.size() != batch.size()) {
      fail(ErrorKind::ProviderError, fmt::format("embedding backend returned {} of {} vectors", fresh.size(),
                                                 batch.size()));
    }
    for (std::size_t j = 0; j < missing.size(); ++j) out[missing[j]] = std::move(fresh[j]);
  }

  std::size_t dim = out.front().size();
  for (const auto& v : out) {
    if (v.size() != dim || dim == 0) {
      fail(ErrorKind::EmbeddingDimError, fmt::format("embedding batch mixes dimensions {} and {}", dim, v.size()));
    }
  }
  for (auto i : missing) {
    auto key = CacheKey::for_embedding(provider_id_, model_, texts[i]);
    json record = {{"kind", "embedding"},
                   {"request", {{"provider_id", provider_id_}, {"model", model_}, {"text", texts[i]}}},
                   {"response", {{"embedding", out[i]}}}};
    cache_->put(key, record);
  }
  return out;
}

}  // namespace crisisfuse
