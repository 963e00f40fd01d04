#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "crisisfuse/embedding.hpp"

namespace crisisfuse {

using ChunkId = std::uint32_t;

inline constexpr std::string_view kIndexFormat = "kb-v1";

struct Document {
  std::string id;  // path relative to the ingest root
  std::string source_path;
  std::string title;
  std::string body;
};

struct ChunkingOptions {
  std::size_t chunk_size = 2000;  // code points
  std::size_t overlap = 200;

  void validate() const;
};

struct KnowledgeChunk {
  ChunkId chunk_id = 0;
  std::string document_id;
  std::size_t begin = 0;  // code point offsets into the document body
  std::size_t end = 0;
  std::string text;
  std::map<std::string, std::uint32_t> term_frequencies;
  std::uint32_t length = 0;  // token count
  Embedding embedding;       // empty until embeddings are attached
};

struct RetrievalHit {
  ChunkId chunk_id = 0;
  std::optional<double> keyword_score;
  std::optional<double> semantic_score;
  double fused_score = 0.0;
  std::uint32_t fused_rank = 0;  // 1-based
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Half-open code point windows of `chunk_size` advancing by chunk_size - overlap;
/// the last window is clipped to `length`. A body no longer than chunk_size is one window.
std::vector<std::pair<std::size_t, std::size_t>> chunk_windows(std::size_t length, const ChunkingOptions& options);

/// Ingested corpus with its keyword statistics and optional embedding matrix.
/// Built once, then read-only.
class Corpus {
 public:
  Corpus() = default;

  /// Chunks every document in order; chunk ids are assigned sequentially from 0.
  /// Throws EmptyCorpus when no document yields a chunk.
  static Corpus build(std::vector<Document> documents, const ChunkingOptions& options);

  const std::vector<Document>& documents() const noexcept { return documents_; }
  const std::vector<KnowledgeChunk>& chunks() const noexcept { return chunks_; }
  const KnowledgeChunk& chunk(ChunkId id) const;
  const Document& document_of(const KnowledgeChunk& chunk) const;
  bool contains(ChunkId id) const noexcept { return id < chunks_.size(); }
  std::size_t size() const noexcept { return chunks_.size(); }
  const ChunkingOptions& chunking() const noexcept { return chunking_; }

  std::uint32_t document_frequency(const std::string& term) const;
  double average_length() const noexcept { return average_length_; }
  /// (chunk id, term frequency) for every chunk containing `term`.
  const std::vector<std::pair<ChunkId, std::uint32_t>>& postings(const std::string& term) const;

  bool embeddings_ready() const noexcept;
  std::size_t embedding_dimension() const noexcept { return embedding_dim_; }
  const std::string& embedder_id() const noexcept { return embedder_id_; }
  /// Embeds every chunk text in batches of `batch_size`.
  void attach_embeddings(Embedder& embedder, std::size_t batch_size = 64);
  void set_embeddings(std::vector<Embedding> embeddings, std::string embedder_id);

  /// Writes the kb-v1 directory layout; see README for the file formats.
  void save(const std::filesystem::path& dir) const;
  static Corpus load(const std::filesystem::path& dir);

 private:
  void index_terms();

  std::vector<Document> documents_;
  std::unordered_map<std::string, std::size_t> document_index_;
  std::vector<KnowledgeChunk> chunks_;
  ChunkingOptions chunking_;
  std::unordered_map<std::string, std::vector<std::pair<ChunkId, std::uint32_t>>> postings_;
  double average_length_ = 0.0;
  std::size_t embedding_dim_ = 0;
  std::string embedder_id_;
};

/// Recursively lists .txt / .md / .markdown files under `root`, sorted.
std::vector<std::filesystem::path> collect_document_paths(const std::filesystem::path& root);

/// Reads files as documents; ids are paths relative to `root` (or the path itself).
/// Throws IngestError naming the unreadable path.
std::vector<Document> load_documents(std::span<const std::filesystem::path> paths,
                                     const std::filesystem::path& root = {});

Corpus ingest(std::span<const std::filesystem::path> paths, const ChunkingOptions& options,
              const std::filesystem::path& root = {});
Corpus ingest_directory(const std::filesystem::path& root, const ChunkingOptions& options);

/// Top-k chunks by BM25. Ties by ascending chunk id. Throws EmptyQuery when the
/// query has no terms after normalization.
std::vector<RetrievalHit> keyword_search(const Corpus& corpus, std::string_view query, std::size_t k,
                                         const Bm25Params& params = {});

/// Top-k chunks by cosine similarity to `query_embedding`. Ties by ascending chunk id.
std::vector<RetrievalHit> semantic_search(const Corpus& corpus, std::span<const double> query_embedding,
                                          std::size_t k);

/// Union of two retrievers' top lists, truncated to `n`. Order: chunks found by
/// both lists first, then by the larger of the per-list min-max normalized
/// scores, then by chunk id. Keyword hits with zero score are not counted as
/// retrieved.
std::vector<RetrievalHit> merge_hybrid(std::span<const RetrievalHit> keyword_hits,
                                       std::span<const RetrievalHit> semantic_hits, std::size_t n);

/// Binds a corpus to the embedder that produced its chunk embeddings.
class HybridRetriever {
 public:
  HybridRetriever(const Corpus& corpus, Embedder& embedder, Bm25Params params = {});

  std::vector<RetrievalHit> keyword(std::string_view query, std::size_t k) const;
  std::vector<RetrievalHit> semantic(std::string_view query, std::size_t k) const;
  std::vector<RetrievalHit> hybrid(std::string_view query, std::size_t n) const;

  const Corpus& corpus() const noexcept { return corpus_; }

 private:
  const Corpus& corpus_;
  Embedder& embedder_;
  Bm25Params params_;
};

/// "[Source: <title>]\n<text>" per hit, in hit order, separated by a blank line.
std::string build_context(std::span<const RetrievalHit> hits, const Corpus& corpus);

}  // namespace crisisfuse
