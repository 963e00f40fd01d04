#include "crisisfuse/knowledge_base.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "crisisfuse/error.hpp"
#include "crisisfuse/text.hpp"

namespace crisisfuse {

using nlohmann::json;
namespace fs = std::filesystem;

void ChunkingOptions::validate() const {
  if (chunk_size == 0) fail(ErrorKind::InvalidArgument, "chunk_size must be positive");
  if (overlap >= chunk_size) {
    fail(ErrorKind::InvalidArgument, fmt::format("overlap {} must be smaller than chunk_size {}", overlap, chunk_size));
  }
}

std::vector<std::pair<std::size_t, std::size_t>> chunk_windows(std::size_t length, const ChunkingOptions& options) {
  options.validate();
  std::vector<std::pair<std::size_t, std::size_t>> windows;
  if (length == 0) return windows;
  const std::size_t stride = options.chunk_size - options.overlap;
  for (std::size_t start = 0;; start += stride) {
    std::size_t end = std::min(start + options.chunk_size, length);
    windows.emplace_back(start, end);
    if (end == length) break;
  }
  return windows;
}

// ---------------------------------------------------------------------------
// Corpus

Corpus Corpus::build(std::vector<Document> documents, const ChunkingOptions& options) {
  options.validate();
  Corpus corpus;
  corpus.chunking_ = options;
  corpus.documents_ = std::move(documents);
  for (std::size_t i = 0; i < corpus.documents_.size(); ++i) {
    const auto& doc = corpus.documents_[i];
    if (!corpus.document_index_.emplace(doc.id, i).second) {
      fail(ErrorKind::IngestError, fmt::format("duplicate document id '{}'", doc.id));
    }
    auto offsets = text::code_point_offsets(doc.body);
    for (auto [begin, end] : chunk_windows(offsets.size() - 1, options)) {
      KnowledgeChunk chunk;
      chunk.chunk_id = static_cast<ChunkId>(corpus.chunks_.size());
      chunk.document_id = doc.id;
      chunk.begin = begin;
      chunk.end = end;
      chunk.text = doc.body.substr(offsets[begin], offsets[end] - offsets[begin]);
      corpus.chunks_.push_back(std::move(chunk));
    }
  }
  if (corpus.chunks_.empty()) fail(ErrorKind::EmptyCorpus, "no document produced any chunk");
  corpus.index_terms();
  return corpus;
}

void Corpus::index_terms() {
  postings_.clear();
  double total = 0.0;
  for (auto& chunk : chunks_) {
    chunk.term_frequencies.clear();
    auto tokens = text::tokenize(chunk.text);
    chunk.length = static_cast<std::uint32_t>(tokens.size());
    total += chunk.length;
    for (auto& t : tokens) ++chunk.term_frequencies[t];
    for (const auto& [term, tf] : chunk.term_frequencies) postings_[term].emplace_back(chunk.chunk_id, tf);
  }
  average_length_ = chunks_.empty() ? 0.0 : total / static_cast<double>(chunks_.size());
}

const KnowledgeChunk& Corpus::chunk(ChunkId id) const {
  if (!contains(id)) fail(ErrorKind::InvalidArgument, fmt::format("unknown chunk id {}", id));
  return chunks_[id];
}

const Document& Corpus::document_of(const KnowledgeChunk& chunk) const {
  auto it = document_index_.find(chunk.document_id);
  if (it == document_index_.end()) {
    fail(ErrorKind::IndexFormat, fmt::format("chunk {} references unknown document '{}'", chunk.chunk_id,
                                             chunk.document_id));
  }
  return documents_[it->second];
}

std::uint32_t Corpus::document_frequency(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : static_cast<std::uint32_t>(it->second.size());
}

const std::vector<std::pair<ChunkId, std::uint32_t>>& Corpus::postings(const std::string& term) const {
  static const std::vector<std::pair<ChunkId, std::uint32_t>> kEmpty;
  auto it = postings_.find(term);
  return it == postings_.end() ? kEmpty : it->second;
}

bool Corpus::embeddings_ready() const noexcept {
  if (chunks_.empty() || embedding_dim_ == 0) return false;
  return std::all_of(chunks_.begin(), chunks_.end(),
                     [&](const KnowledgeChunk& c) { return c.embedding.size() == embedding_dim_; });
}

void Corpus::attach_embeddings(Embedder& embedder, std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  std::vector<Embedding> all;
  all.reserve(chunks_.size());
  for (std::size_t start = 0; start < chunks_.size(); start += batch_size) {
    std::vector<std::string> batch;
    for (std::size_t i = start; i < std::min(chunks_.size(), start + batch_size); ++i) batch.push_back(chunks_[i].text);
    for (auto& v : embedder.embed(batch)) all.push_back(std::move(v));
  }
  set_embeddings(std::move(all), embedder.id());
}

void Corpus::set_embeddings(std::vector<Embedding> embeddings, std::string embedder_id) {
  if (embeddings.size() != chunks_.size()) {
    fail(ErrorKind::EmbeddingDimError,
         fmt::format("{} embeddings supplied for {} chunks", embeddings.size(), chunks_.size()));
  }
  std::size_t dim = embeddings.empty() ? 0 : embeddings.front().size();
  for (const auto& e : embeddings) {
    if (e.size() != dim || dim == 0) {
      fail(ErrorKind::EmbeddingDimError, fmt::format("chunk embeddings mix dimensions {} and {}", dim, e.size()));
    }
  }
  for (std::size_t i = 0; i < chunks_.size(); ++i) chunks_[i].embedding = std::move(embeddings[i]);
  embedding_dim_ = dim;
  embedder_id_ = std::move(embedder_id);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, fmt::format("cannot write {}", path.string()));
  out << content;
}

std::string read_text(const fs::path& path, ErrorKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(kind, fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put_double_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_double_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void Corpus::save(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, fmt::format("cannot create {}: {}", dir.string(), ec.message()));

  write_text(dir / "FORMAT", std::string(kIndexFormat) + "\n");

  std::string docs;
  for (const auto& d : documents_) {
    docs += json{{"id", d.id}, {"source_path", d.source_path}, {"title", d.title}, {"body", d.body}}.dump();
    docs += '\n';
  }
  write_text(dir / "documents.jsonl", docs);

  std::string chunks;
  for (const auto& c : chunks_) {
    chunks += json{{"chunk_id", c.chunk_id},
                   {"document_id", c.document_id},
                   {"begin", c.begin},
                   {"end", c.end},
                   {"text", c.text}}
                  .dump();
    chunks += '\n';
  }
  write_text(dir / "chunks.jsonl", chunks);

  json df = json::object();
  for (const auto& [term, list] : postings_) df[term] = list.size();
  json lengths = json::array();
  for (const auto& c : chunks_) lengths.push_back(c.length);
  json stats = {{"format", kIndexFormat},
                {"chunk_size", chunking_.chunk_size},
                {"overlap", chunking_.overlap},
                {"num_chunks", chunks_.size()},
                {"average_length", average_length_},
                {"chunk_lengths", lengths},
                {"document_frequency", df}};
  write_text(dir / "term_stats.json", stats.dump(1) + "\n");

  std::size_t rows = embeddings_ready() ? chunks_.size() : 0;
  std::size_t dim = rows ? embedding_dim_ : 0;
  std::string blob = fmt::format("{} embeddings rows={} dim={} embedder={}\n", kIndexFormat, rows, dim,
                                 rows ? embedder_id_ : "-");
  blob.reserve(blob.size() + rows * dim * 8);
  for (std::size_t r = 0; r < rows; ++r) {
    for (double v : chunks_[r].embedding) put_double_le(blob, v);
  }
  write_text(dir / "embeddings.bin", blob);
}

Corpus Corpus::load(const fs::path& dir) {
  auto format = text::trim(read_text(dir / "FORMAT", ErrorKind::IndexFormat));
  if (format != kIndexFormat) {
    fail(ErrorKind::IndexFormat, fmt::format("{} has format '{}', expected '{}'", dir.string(), format, kIndexFormat));
  }
  Corpus corpus;
  try {
    auto stats = json::parse(read_text(dir / "term_stats.json", ErrorKind::IndexFormat));
    corpus.chunking_.chunk_size = stats.at("chunk_size").get<std::size_t>();
    corpus.chunking_.overlap = stats.at("overlap").get<std::size_t>();

    std::istringstream docs(read_text(dir / "documents.jsonl", ErrorKind::IndexFormat));
    for (std::string line; std::getline(docs, line);) {
      if (line.empty()) continue;
      auto j = json::parse(line);
      Document d{j.at("id").get<std::string>(), j.at("source_path").get<std::string>(),
                 j.at("title").get<std::string>(), j.at("body").get<std::string>()};
      corpus.document_index_.emplace(d.id, corpus.documents_.size());
      corpus.documents_.push_back(std::move(d));
    }

    std::istringstream chunks(read_text(dir / "chunks.jsonl", ErrorKind::IndexFormat));
    for (std::string line; std::getline(chunks, line);) {
      if (line.empty()) continue;
      auto j = json::parse(line);
      KnowledgeChunk c;
      c.chunk_id = j.at("chunk_id").get<ChunkId>();
      c.document_id = j.at("document_id").get<std::string>();
      c.begin = j.at("begin").get<std::size_t>();
      c.end = j.at("end").get<std::size_t>();
      c.text = j.at("text").get<std::string>();
      if (c.chunk_id != corpus.chunks_.size()) {
        fail(ErrorKind::IndexFormat, fmt::format("chunk ids are not contiguous at {}", c.chunk_id));
      }
      corpus.chunks_.push_back(std::move(c));
    }
    if (corpus.chunks_.empty()) fail(ErrorKind::EmptyCorpus, fmt::format("{} holds no chunks", dir.string()));
    corpus.index_terms();

    if (stats.at("num_chunks").get<std::size_t>() != corpus.chunks_.size() ||
        stats.at("document_frequency").size() != corpus.postings_.size()) {
      fail(ErrorKind::IndexFormat, fmt::format("{}: term statistics disagree with chunk store", dir.string()));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::IndexFormat, fmt::format("{}: {}", dir.string(), e.what()));
  }

  auto blob = read_text(dir / "embeddings.bin", ErrorKind::IndexFormat);
  auto newline = blob.find('\n');
  if (newline == std::string::npos) fail(ErrorKind::IndexFormat, "embeddings.bin lacks a header");
  std::istringstream header(blob.substr(0, newline));
  std::string tag, kind, rows_field, dim_field, embedder_field;
  header >> tag >> kind >> rows_field >> dim_field >> embedder_field;
  if (tag != kIndexFormat || kind != "embeddings" || rows_field.rfind("rows=", 0) != 0 ||
      dim_field.rfind("dim=", 0) != 0 || embedder_field.rfind("embedder=", 0) != 0) {
    fail(ErrorKind::IndexFormat, "malformed embeddings.bin header");
  }
  std::size_t rows = std::stoul(rows_field.substr(5));
  std::size_t dim = std::stoul(dim_field.substr(4));
  if (rows > 0) {
    if (rows != corpus.chunks_.size() || blob.size() - newline - 1 != rows * dim * 8) {
      fail(ErrorKind::IndexFormat, "embedding matrix size does not match the chunk store");
    }
    auto* p = reinterpret_cast<const unsigned char*>(blob.data() + newline + 1);
    std::vector<Embedding> embeddings(rows, Embedding(dim));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < dim; ++c, p += 8) embeddings[r][c] = get_double_le(p);
    }
    corpus.set_embeddings(std::move(embeddings), embedder_field.substr(9));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Ingest

std::vector<fs::path> collect_document_paths(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) fail(ErrorKind::IngestError, fmt::format("{} is not a directory", root.string()));
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(root, ec)) {
    if (!entry.is_regular_file()) continue;
    auto ext = text::to_lower_ascii(entry.path().extension().string());
    if (ext == ".txt" || ext == ".md" || ext == ".markdown") paths.push_back(entry.path());
  }
  if (ec) fail(ErrorKind::IngestError, fmt::format("cannot walk {}: {}", root.string(), ec.message()));
  std::sort(paths.begin(), paths.end());
  return paths;
}

namespace {

std::string title_for(const fs::path& path, const std::string& body) {
  std::istringstream in(body);
  for (std::string line; std::getline(in, line);) {
    auto t = text::trim(line);
    if (t.empty()) continue;
    if (t.rfind("# ", 0) == 0) return text::trim(t.substr(2));
    break;
  }
  return path.stem().string();
}

}  // namespace

std::vector<Document> load_documents(std::span<const fs::path> paths, const fs::path& root) {
  std::vector<Document> docs;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IngestError, fmt::format("cannot read {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(ErrorKind::IngestError, fmt::format("cannot read {}", path.string()));
    std::string body = ss.str();
    if (text::trim(body).empty()) {
      spdlog::warn("skipping empty document {}", path.string());
      continue;
    }
    std::string id = root.empty() ? path.generic_string() : path.lexically_relative(root).generic_string();
    docs.push_back({id, path.string(), title_for(path, body), std::move(body)});
  }
  return docs;
}

Corpus ingest(std::span<const fs::path> paths, const ChunkingOptions& options, const fs::path& root) {
  options.validate();
  return Corpus::build(load_documents(paths, root), options);
}

Corpus ingest_directory(const fs::path& root, const ChunkingOptions& options) {
  auto paths = collect_document_paths(root);
  if (paths.empty()) fail(ErrorKind::EmptyCorpus, fmt::format("no .txt or .md files under {}", root.string()));
  return ingest(paths, options, root);
}

// ---------------------------------------------------------------------------
// Retrieval

namespace {

std::vector<RetrievalHit> rank_top_k(const std::vector<double>& scores, std::size_t k, bool keyword) {
  std::vector<ChunkId> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<ChunkId>(i);
  auto take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](ChunkId a, ChunkId b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; });
  std::vector<RetrievalHit> hits;
  hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    RetrievalHit h;
    h.chunk_id = order[i];
    (keyword ? h.keyword_score : h.semantic_score) = scores[order[i]];
    h.fused_score = scores[order[i]];
    h.fused_rank = static_cast<std::uint32_t>(i + 1);
    hits.push_back(h);
  }
  return hits;
}

}  // namespace

std::vector<RetrievalHit> keyword_search(const Corpus& corpus, std::string_view query, std::size_t k,
                                         const Bm25Params& params) {
  if (k == 0) fail(ErrorKind::InvalidArgument, "k must be >= 1");
  auto tokens = text::tokenize(query);
  if (tokens.empty()) fail(ErrorKind::EmptyQuery, fmt::format("query '{}' has no terms", query));
  std::set<std::string> terms(tokens.begin(), tokens.end());

  const double n = static_cast<double>(corpus.size());
  const double avg = corpus.average_length();
  std::vector<double> scores(corpus.size(), 0.0);
  for (const auto& term : terms) {
    const auto& list = corpus.postings(term);
    if (list.empty()) continue;
    double df = static_cast<double>(list.size());
    double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (auto [id, tf_count] : list) {
      double tf = tf_count;
      double len_ratio = avg > 0.0 ? corpus.chunks()[id].length / avg : 1.0;
      scores[id] += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * len_ratio));
    }
  }
  return rank_top_k(scores, k, true);
}

std::vector<RetrievalHit> semantic_search(const Corpus& corpus, std::span<const double> query_embedding,
                                          std::size_t k) {
  if (k == 0) fail(ErrorKind::InvalidArgument, "k must be >= 1");
  if (!corpus.embeddings_ready()) fail(ErrorKind::IndexNotReady, "chunk embeddings are missing");
  if (query_embedding.size() != corpus.embedding_dimension()) {
    fail(ErrorKind::EmbeddingDimError, fmt::format("query dimension {} vs index dimension {}",
                                                   query_embedding.size(), corpus.embedding_dimension()));
  }
  double qn = norm(query_embedding);
  if (qn == 0.0) fail(ErrorKind::DegenerateEmbedding, "query embedding has zero norm");
  std::vector<double> scores(corpus.size());
  for (const auto& c : corpus.chunks()) {
    double cn = norm(c.embedding);
    if (cn == 0.0) fail(ErrorKind::DegenerateEmbedding, fmt::format("chunk {} has a zero-norm embedding", c.chunk_id));
    scores[c.chunk_id] = dot(query_embedding, c.embedding) / (qn * cn);
  }
  return rank_top_k(scores, k, false);
}

std::vector<RetrievalHit> merge_hybrid(std::span<const RetrievalHit> keyword_hits,
                                       std::span<const RetrievalHit> semantic_hits, std::size_t n) {
  struct Entry {
    RetrievalHit hit;
    int votes = 0;
  };
  std::map<ChunkId, Entry> merged;

  auto absorb = [&](std::span<const RetrievalHit> hits, bool keyword) {
    std::vector<std::pair<ChunkId, double>> list;
    for (const auto& h : hits) {
      if (list.size() == n) break;
      auto raw = keyword ? h.keyword_score : h.semantic_score;
      if (!raw) continue;
      if (keyword && *raw <= 0.0) continue;
      list.emplace_back(h.chunk_id, *raw);
    }
    if (list.empty()) return;
    auto [lo, hi] = std::minmax_element(list.begin(), list.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
    double min = lo->second;
    double range = hi->second - min;
    for (auto [id, raw] : list) {
      auto& e = merged[id];
      e.hit.chunk_id = id;
      (keyword ? e.hit.keyword_score : e.hit.semantic_score) = raw;
      double normalized = range > 0.0 ? (raw - min) / range : 1.0;
      e.hit.fused_score = e.votes == 0 ? normalized : std::max(e.hit.fused_score, normalized);
      ++e.votes;
    }
  };
  absorb(keyword_hits, true);
  absorb(semantic_hits, false);

  std::vector<Entry> entries;
  entries.reserve(merged.size());
  for (auto& [id, e] : merged) entries.push_back(e);
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.votes != b.votes) return a.votes > b.votes;
    if (a.hit.fused_score != b.hit.fused_score) return a.hit.fused_score > b.hit.fused_score;
    return a.hit.chunk_id < b.hit.chunk_id;
  });
  if (entries.size() > n) entries.resize(n);

  std::vector<RetrievalHit> out;
  out.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].hit.fused_rank = static_cast<std::uint32_t>(i + 1);
    out.push_back(entries[i].hit);
  }
  return out;
}

HybridRetriever::HybridRetriever(const Corpus& corpus, Embedder& embedder, Bm25Params params)
    : corpus_(corpus), embedder_(embedder), params_(params) {}

std::vector<RetrievalHit> HybridRetriever::keyword(std::string_view query, std::size_t k) const {
  return keyword_search(corpus_, query, k, params_);
}

std::vector<RetrievalHit> HybridRetriever::semantic(std::string_view query, std::size_t k) const {
  if (!corpus_.embeddings_ready()) fail(ErrorKind::IndexNotReady, "chunk embeddings are missing");
  auto q = embedder_.embed_one(std::string(query));
  return semantic_search(corpus_, q, k);
}

std::vector<RetrievalHit> HybridRetriever::hybrid(std::string_view query, std::size_t n) const {
  if (n == 0) fail(ErrorKind::InvalidArgument, "N must be >= 1");
  auto k = keyword(query, n);
  auto s = semantic(query, n);
  return merge_hybrid(k, s, n);
}

std::string build_context(std::span<const RetrievalHit> hits, const Corpus& corpus) {
  if (hits.empty()) fail(ErrorKind::EmptyContext, "no retrieval hits to build a context from");
  std::string out;
  for (const auto& h : hits) {
    const auto& chunk = corpus.chunk(h.chunk_id);
    if (!out.empty()) out += "\n\n";
    out += "[Source: " + corpus.document_of(chunk).title + "]\n" + chunk.text;
  }
  return out;
}

}  // namespace crisisfuse
