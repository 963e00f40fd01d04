#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace crisisfuse {

using Embedding = std::vector<double>;

/// Text -> fixed-dimension vector. Implementations must be safe for
/// concurrent calls.
class Embedder {
 public:
  virtual ~Embedder() = default;

  /// One vector per input, uniform dimension. Empty batch throws InvalidArgument.
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) = 0;

  /// Stable identifier folded into cache keys and index metadata.
  virtual std::string id() const = 0;

  Embedding embed_one(const std::string& text);
};

/// Deterministic local embedder: hashed character trigrams (with word
/// boundary markers) counted into `dimension` buckets. Counts are
/// non-negative, so any non-empty text gets a non-zero vector.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256);

  std::vector<Embedding> embed(std::span<const std::string> texts) override;
  std::string id() const override;
  std::size_t dimension() const noexcept { return dimension_; }

 private:
  std::size_t dimension_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
/// Cosine similarity; throws DegenerateEmbedding when either vector has zero norm
/// and EmbeddingDimError on a dimension mismatch.
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace crisisfuse
