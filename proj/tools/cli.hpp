#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "crisisfuse/config.hpp"
#include "crisisfuse/provider.hpp"

namespace crisisfuse::cli {

/// Injection points for tests; unset members fall back to HTTP transports and
/// the standard streams.
struct Hooks {
  std::function<std::shared_ptr<ChatTransport>(const ChatBackendSettings&)> chat_transport;
  std::function<std::shared_ptr<EmbeddingTransport>(const EmbedderSettings&)> embedding_transport;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

int run_cli(const std::vector<std::string>& args, const Hooks& hooks = {});
int run_cli(int argc, const char* const* argv, const Hooks& hooks = {});

}  // namespace crisisfuse::cli
