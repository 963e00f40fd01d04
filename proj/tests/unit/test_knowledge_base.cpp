#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "crisisfuse/knowledge_base.hpp"
#include "crisisfuse/text.hpp"
#include "retrieval_oracles.hpp"
#include "test_util.hpp"

using namespace crisisfuse;
using crisisfuse::test_support::TempDir;
using crisisfuse::test_support::bm25_oracle;
using crisisfuse::test_support::cosine_oracle;
using crisisfuse::test_support::union_oracle;

namespace {

Corpus make_corpus(const std::vector<std::string>& bodies, ChunkingOptions opts = {}) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    docs.push_back({"d" + std::to_string(i), "d" + std::to_string(i) + ".md", "Doc " + std::to_string(i), bodies[i]});
  }
  return Corpus::build(std::move(docs), opts);
}

}  // namespace

TEST(Chunking, StrideArithmetic) {
  auto w = chunk_windows(1000, {500, 50});
  EXPECT_EQ(w, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 500}, {450, 950}, {900, 1000}}));
  EXPECT_EQ(chunk_windows(120, {500, 50}).size(), 1u);
  EXPECT_KIND(chunk_windows(10, {50, 50}), ErrorKind::InvalidArgument);
}

TEST(Chunking, EveryCodePointCoveredAndOverlapExact) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<std::size_t> len(1, 5000), size(2, 700);
  for (int t = 0; t < 300; ++t) {
    std::size_t L = len(rng), S = size(rng);
    std::size_t O = std::uniform_int_distribution<std::size_t>(0, S - 1)(rng);
    auto w = chunk_windows(L, {S, O});
    ASSERT_FALSE(w.empty());
    EXPECT_EQ(w.front().first, 0u);
    EXPECT_EQ(w.back().second, L);
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      EXPECT_EQ(w[i].second - w[i].first, S);
      EXPECT_EQ(w[i].second - w[i + 1].first, O);
    }
  }
}

TEST(Corpus, ChunksUseCodePointOffsets) {
  std::string body = "\xC3\xA9t\xC3\xA9 abc";  // "été abc", 7 code points
  auto c = make_corpus({body}, {4, 1});
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.chunks()[0].text, "\xC3\xA9t\xC3\xA9 ");
  EXPECT_EQ(c.chunks()[1].begin, 3u);
  EXPECT_EQ(c.chunks()[1].text, " abc");
}

TEST(Corpus, SequentialIdsAndDeterminism) {
  std::vector<std::string> bodies{std::string(900, 'a'), "short body", std::string(300, 'b')};
  auto a = make_corpus(bodies, {400, 40});
  auto b = make_corpus(bodies, {400, 40});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.chunks()[i].chunk_id, i);
    EXPECT_EQ(a.chunks()[i].text, b.chunks()[i].text);
  }
}

TEST(Corpus, EmptyAndDuplicateDocuments) {
  EXPECT_KIND(Corpus::build({}, {}), ErrorKind::EmptyCorpus);
  std::vector<Document> dup{{"x", "x", "X", "one"}, {"x", "x", "X", "two"}};
  EXPECT_KIND(Corpus::build(dup, {}), ErrorKind::IngestError);
}

TEST(Ingest, DirectoryErrors) {
  TempDir dir;
  EXPECT_KIND(ingest_directory(dir.path(), {}), ErrorKind::EmptyCorpus);
  EXPECT_KIND(ingest_directory(dir / "missing", {}), ErrorKind::IngestError);
  std::vector<std::filesystem::path> paths{dir / "nope.md"};
  EXPECT_KIND(load_documents(paths, dir.path()), ErrorKind::IngestError);
}

TEST(Ingest, TitlesAndRelativeIds) {
  TempDir dir;
  test_support::write_file(dir / "a/guide.md", "\n# Shelter Guide\nintro\nbody text");
  test_support::write_file(dir / "notes.txt", "plain notes");
  test_support::write_file(dir / "ignored.pdf", "binary");
  auto corpus = ingest_directory(dir.path(), {});
  ASSERT_EQ(corpus.documents().size(), 2u);
  EXPECT_EQ(corpus.documents()[0].id, "a/guide.md");
  EXPECT_EQ(corpus.documents()[0].title, "Shelter Guide");
  EXPECT_EQ(corpus.documents()[1].title, "notes");
}

TEST(Index, SaveLoadRoundTrip) {
  TempDir dir;
  auto c = make_corpus({"shelter open near the county fairgrounds", "boil water notice in effect"}, {20, 5});
  HashingEmbedder e(32);
  c.attach_embeddings(e);
  c.save(dir / "idx");
  auto d = Corpus::load(dir / "idx");
  ASSERT_EQ(d.size(), c.size());
  EXPECT_EQ(d.embedder_id(), e.id());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(d.chunks()[i].text, c.chunks()[i].text);
    EXPECT_EQ(d.chunks()[i].embedding, c.chunks()[i].embedding);
    EXPECT_EQ(d.chunks()[i].term_frequencies, c.chunks()[i].term_frequencies);
  }
  EXPECT_EQ(test_support::read_file(dir / "idx/FORMAT"), "kb-v1\n");
}

TEST(Index, RejectsWrongFormatTag) {
  TempDir dir;
  auto c = make_corpus({"some text"});
  c.save(dir / "idx");
  test_support::write_file(dir / "idx/FORMAT", "kb-v0\n");
  EXPECT_KIND(Corpus::load(dir / "idx"), ErrorKind::IndexFormat);
}

TEST(KeywordSearch, OnlyMatchingChunkFirst) {
  auto c = make_corpus({"flood water rising", "shelter open now"});
  auto hits = keyword_search(c, "shelter", 2);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].chunk_id, 1u);
  EXPECT_GT(*hits[0].keyword_score, 0.0);
  EXPECT_EQ(*hits[1].keyword_score, 0.0);
}

TEST(KeywordSearch, FiveChunkOracle) {
  auto c = make_corpus({"shelter shelter evacuation route", "evacuation order for zone a", "food bank open",
                        "pet friendly shelter at fairgrounds", "water distribution and evacuation shelter list"});
  auto hits = keyword_search(c, "Shelter, evacuation!", 5);
  auto want = bm25_oracle(c, "shelter evacuation", 5);
  ASSERT_EQ(hits.size(), want.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    EXPECT_EQ(hits[i].chunk_id, want[i].first);
    EXPECT_NEAR(*hits[i].keyword_score, want[i].second, 1e-12);
  }
}

TEST(KeywordSearch, KLargerThanCorpusAndEmptyQuery) {
  auto c = make_corpus({"a b", "c d", "e f"});
  EXPECT_EQ(keyword_search(c, "c", 10).size(), 3u);
  EXPECT_KIND(keyword_search(c, " ?! ", 3), ErrorKind::EmptyQuery);
}

TEST(SemanticSearch, IdentityOrthogonalAndErrors) {
  auto c = make_corpus({"one", "two", "three"});
  EXPECT_KIND(semantic_search(c, std::vector<double>{1, 0}, 1), ErrorKind::IndexNotReady);
  c.set_embeddings({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, "manual");
  auto hits = semantic_search(c, std::vector<double>{0, 1, 0}, 3);
  EXPECT_EQ(hits[0].chunk_id, 1u);
  EXPECT_DOUBLE_EQ(*hits[0].semantic_score, 1.0);

  auto c2 = make_corpus({"one", "two", "three"});
  c2.set_embeddings({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}}, "manual");
  auto ortho = semantic_search(c2, std::vector<double>{0, 0, 0, 1}, 3);
  EXPECT_EQ((std::vector<ChunkId>{ortho[0].chunk_id, ortho[1].chunk_id, ortho[2].chunk_id}),
            (std::vector<ChunkId>{0, 1, 2}));
  EXPECT_KIND(semantic_search(c2, std::vector<double>{0, 0, 0, 0}, 1), ErrorKind::DegenerateEmbedding);
  EXPECT_KIND(semantic_search(c2, std::vector<double>{1, 0}, 1), ErrorKind::EmbeddingDimError);
}

TEST(SemanticSearch, RandomVectorsMatchOracle) {
  std::mt19937 rng(11);
  std::normal_distribution<double> g;
  std::vector<std::string> bodies(10, "x");
  auto c = make_corpus(bodies);
  std::vector<Embedding> emb(10, Embedding(8));
  for (auto& v : emb) {
    for (auto& x : v) x = g(rng);
  }
  c.set_embeddings(emb, "random");
  for (int t = 0; t < 20; ++t) {
    Embedding q(8);
    for (auto& x : q) x = g(rng);
    auto hits = semantic_search(c, q, 10);
    auto want = cosine_oracle(c, q, 10);
    for (std::size_t i = 0; i < hits.size(); ++i) {
      EXPECT_EQ(hits[i].chunk_id, want[i].first);
      EXPECT_NEAR(*hits[i].semantic_score, want[i].second, 1e-12);
    }
  }
}

TEST(Hybrid, UnionOfTwoLists) {
  auto kw = std::vector<RetrievalHit>{{1, 2.0, {}, 0, 1}, {2, 1.0, {}, 0, 2}};
  auto sem = std::vector<RetrievalHit>{{2, {}, 0.9, 0, 1}, {3, {}, 0.5, 0, 2}};
  auto out = merge_hybrid(kw, sem, 3);
  std::set<ChunkId> ids;
  for (const auto& h : out) ids.insert(h.chunk_id);
  EXPECT_EQ(ids, (std::set<ChunkId>{1, 2, 3}));
  EXPECT_EQ(out[0].chunk_id, 2u);  // found by both
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].fused_rank, i + 1);
}

TEST(Hybrid, TwentyChunkUnionOracle) {
  std::mt19937 rng(5);
  std::vector<std::string> bodies;
  for (int i = 0; i < 20; ++i) bodies.push_back(test_support::random_words(rng, 12));
  auto c = make_corpus(bodies);
  HashingEmbedder e(64);
  c.attach_embeddings(e);
  HybridRetriever r(c, e);
  for (int t = 0; t < 20; ++t) {
    auto q = test_support::random_words(rng, 3);
    auto kw = r.keyword(q, 5);
    auto sem = r.semantic(q, 5);
    auto got = merge_hybrid(kw, sem, 5);
    std::vector<std::pair<ChunkId, double>> kwp, semp;
    for (auto& h : bm25_oracle(c, q, 5)) kwp.push_back(h);
    for (auto& h : cosine_oracle(c, e.embed_one(q), 5)) semp.push_back(h);
    auto want = union_oracle(kwp, semp, 5);
    std::vector<ChunkId> got_ids;
    for (auto& h : got) got_ids.push_back(h.chunk_id);
    EXPECT_EQ(got_ids, want);
    EXPECT_LE(got.size(), 5u);
  }
}

TEST(Context, SourcePrefixesInHitOrder) {
  auto c = make_corpus({"alpha text", "beta text"});
  std::vector<RetrievalHit> hits{{1, 1.0, {}, 1.0, 1}, {0, 0.5, {}, 0.0, 2}};
  auto ctx = build_context(hits, c);
  EXPECT_EQ(ctx, "[Source: Doc 1]\nbeta text\n\n[Source: Doc 0]\nalpha text");
  EXPECT_KIND(build_context({}, c), ErrorKind::EmptyContext);
}
