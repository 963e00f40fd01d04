#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisfuse/embedding.hpp"
#include "crisisfuse/error.hpp"

namespace crisisfuse {

struct DecodingParams {
  double temperature = 0.6;
  double top_p = 0.9;
  int max_new_tokens = 256;
  bool sampling = true;

  /// Throws InvalidArgument unless 0 <= temperature <= 2, 0 < top_p <= 1, max_new_tokens >= 1.
  void validate() const;
  nlohmann::json to_json() const;
  static DecodingParams from_json(const nlohmann::json& j);

  /// Evaluator defaults: greedy decoding.
  static DecodingParams judge_defaults();

  friend bool operator==(const DecodingParams&, const DecodingParams&) = default;
};

struct ChatRequest {
  std::string provider_id;
  std::string model;
  std::string system_prompt;
  std::string user_prompt;
  DecodingParams decoding;

  nlohmann::json to_json() const;
};

enum class FinishReason { stop, length, error };
std::string_view to_string(FinishReason r) noexcept;
FinishReason parse_finish_reason(std::string_view s);

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  double latency_ms = 0.0;
  bool from_cache = false;
};

enum class RequestKind { chat, embedding };

/// Content digest of everything that determines a backend reply.
struct CacheKey {
  std::string digest;

  static CacheKey for_chat(const ChatRequest& request);
  static CacheKey for_embedding(const std::string& provider_id, const std::string& model, const std::string& text);

  friend bool operator==(const CacheKey&, const CacheKey&) = default;
  friend auto operator<=>(const CacheKey&, const CacheKey&) = default;
};

// ---------------------------------------------------------------------------
// Transports

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// Throws Error(ProviderError) on failure; transient() set for retryable ones.
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

class EmbeddingTransport {
 public:
  virtual ~EmbeddingTransport() = default;
  virtual std::vector<Embedding> send(const std::string& model, std::span<const std::string> texts) = 0;
};

struct HttpEndpoint {
  /// Base URL of an OpenAI-compatible API, e.g. "https://api.openai.com/v1"
  /// or "http://localhost:8000/v1".
  std::string url;
  /// Name of the environment variable holding the bearer token; empty for none.
  std::string api_key_env;
  std::chrono::seconds timeout{120};
};

/// POST {url}/chat/completions with a system + user message pair.
class HttpChatTransport final : public ChatTransport {
 public:
  explicit HttpChatTransport(HttpEndpoint endpoint);
  ChatResponse send(const ChatRequest& request) override;

  static nlohmann::json request_body(const ChatRequest& request);
  static ChatResponse parse_reply(const std::string& body);

 private:
  HttpEndpoint endpoint_;
};

/// POST {url}/embeddings with a batch of inputs.
class HttpEmbeddingTransport final : public EmbeddingTransport {
 public:
  explicit HttpEmbeddingTransport(HttpEndpoint endpoint);
  std::vector<Embedding> send(const std::string& model, std::span<const std::string> texts) override;

  static std::vector<Embedding> parse_reply(const std::string& body, std::size_t expected);

 private:
  HttpEndpoint endpoint_;
};

// ---------------------------------------------------------------------------
// Cache

/// One JSON record per key under `<dir>/<first two hex chars>/<digest>.json`.
/// Concurrent readers, serialized writers; writes go through a temp file and rename.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<nlohmann::json> get(const CacheKey& key) const;
  void put(const CacheKey& key, const nlohmann::json& record);
  std::filesystem::path path_for(const CacheKey& key) const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

// ---------------------------------------------------------------------------
// Retry

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
using AttemptLogger = std::function<void(int attempt, const Error& error)>;

Sleeper real_sleeper();
void log_attempt(int attempt, const Error& error);

/// Runs `op`, retrying transient Errors with exponential backoff
/// (base_delay * 2^(attempt-1)). Non-transient errors propagate immediately.
/// After max_attempts the last error is rethrown as ProviderError.
template <class Op>
auto with_retry(Op&& op, const RetryPolicy& policy, const Sleeper& sleep = real_sleeper(),
                const AttemptLogger& on_failure = log_attempt) -> decltype(op()) {
  if (policy.max_attempts < 1) fail(ErrorKind::InvalidArgument, "max_attempts must be >= 1");
  for (int attempt = 1;; ++attempt) {
    try {
      return op();
    } catch (const Error& e) {
      if (on_failure) on_failure(attempt, e);
      if (!e.transient()) throw;
      if (attempt >= policy.max_attempts) {
        throw Error(ErrorKind::ProviderError,
                    std::string("giving up after ") + std::to_string(attempt) + " attempts: " + e.what());
      }
      if (sleep) sleep(policy.base_delay * (1LL << (attempt - 1)));
    }
  }
}

// ---------------------------------------------------------------------------
// Providers

enum class ProviderMode { live, replay };
std::string_view to_string(ProviderMode m) noexcept;
ProviderMode parse_provider_mode(std::string_view s);

/// Cached chat-completion handle. In replay mode the transport is never touched
/// and a missing record raises ReplayMiss. Identical concurrent live requests
/// share one backend call.
class ChatProvider {
 public:
  ChatProvider(std::string provider_id, std::string model, std::shared_ptr<ChatTransport> transport,
               std::shared_ptr<ResponseCache> cache, ProviderMode mode, RetryPolicy retry = {},
               Sleeper sleeper = real_sleeper());

  ChatResponse complete(const ChatRequest& request);

  /// Fills provider id and model from this handle.
  ChatRequest make_request(std::string system_prompt, std::string user_prompt, const DecodingParams& decoding) const;

  const std::string& id() const noexcept { return provider_id_; }
  const std::string& model() const noexcept { return model_; }
  ProviderMode mode() const noexcept { return mode_; }
  std::size_t transport_calls() const noexcept { return transport_calls_.load(); }

 private:
  ChatResponse call_backend(const ChatRequest& request, const CacheKey& key);

  std::string provider_id_;
  std::string model_;
  std::shared_ptr<ChatTransport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  ProviderMode mode_;
  RetryPolicy retry_;
  Sleeper sleeper_;
  std::atomic<std::size_t> transport_calls_{0};
  std::mutex inflight_mutex_;
  std::map<std::string, std::shared_future<ChatResponse>> inflight_;
};

/// Embedder backed by a remote transport with a per-text cache.
class CachingEmbedder final : public Embedder {
 public:
  CachingEmbedder(std::string provider_id, std::string model, std::shared_ptr<EmbeddingTransport> transport,
                  std::shared_ptr<ResponseCache> cache, ProviderMode mode, RetryPolicy retry = {},
                  Sleeper sleeper = real_sleeper());

  std::vector<Embedding> embed(std::span<const std::string> texts) override;
  std::string id() const override;
  std::size_t transport_calls() const noexcept { return transport_calls_.load(); }

 private:
  std::string provider_id_;
  std::string model_;
  std::shared_ptr<EmbeddingTransport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  ProviderMode mode_;
  RetryPolicy retry_;
  Sleeper sleeper_;
  std::atomic<std::size_t> transport_calls_{0};
};

}  // namespace crisisfuse
