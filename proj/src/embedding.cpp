#include "crisisfuse/embedding.hpp"

#include <cmath>
#include <cstdint>

#include <fmt/format.h>

#include "crisisfuse/error.hpp"
#include "crisisfuse/text.hpp"

namespace crisisfuse {

Embedding Embedder::embed_one(const std::string& text) {
  std::vector<std::string> batch{text};
  auto out = embed(batch);
  return std::move(out.front());
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) fail(ErrorKind::InvalidArgument, "embedding dimension must be positive");
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<Embedding> HashingEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) fail(ErrorKind::InvalidArgument, "embed called with an empty batch");
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    Embedding v(dimension_, 0.0);
    for (const auto& token : text::tokenize(t)) {
      std::string padded = "^" + token + "$";
      if (padded.size() < 3) continue;
      for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        v[fnv1a(std::string_view(padded).substr(i, 3)) % dimension_] += 1.0;
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::string HashingEmbedder::id() const { return fmt::format("hashing-trigram-{}", dimension_); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::EmbeddingDimError, fmt::format("cosine over dimensions {} and {}", a.size(), b.size()));
  }
  double na = norm(a);
  double nb = norm(b);
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::DegenerateEmbedding, "zero-norm embedding");
  return dot(a, b) / (na * nb);
}

}  // namespace crisisfuse
