#include <gtest/gtest.h>

#include <filesystem>

#include "disp/error.hpp"
#include "disp/knn_index.hpp"
#include "test_util.hpp"

namespace disp {
namespace {

std::shared_ptr<const EmbeddingCorpus> shared(EmbeddingCorpus c) {
  return std::make_shared<const EmbeddingCorpus>(std::move(c));
}

TEST(BruteForce, ExactMatchTiesAndClipping) {
  const auto c = test::gaussian_corpus(20, 4, 1);
  const auto r = brute_force_knn(c, c.vector(7), 3);
  ASSERT_EQ(r.neighbors.size(), 3u);
  EXPECT_EQ(r.neighbors[0].id, 7u);
  EXPECT_EQ(r.neighbors[0].distance, 0.0f);
  EXPECT_EQ(r.distance_evaluations, 20u);
  EXPECT_EQ(brute_force_knn(c, c.vector(0), 100).neighbors.size(), 20u);

  const auto tie = test::small_corpus({{"a", {1, 0}}, {"b", {-1, 0}}, {"c", {0, 5}}});
  const std::vector<float> origin{0, 0};
  const auto t = brute_force_knn(tie, origin, 2);
  EXPECT_EQ(t.neighbors[0].id, 0u);
  EXPECT_EQ(t.neighbors[1].id, 1u);
}

TEST(BruteForce, ThreePointExample) {
  const auto c = test::small_corpus({{"a", {0, 0}}, {"b", {1, 0}}, {"c", {0, 2}}});
  const std::vector<float> q{0.9f, 0.1f};
  EXPECT_EQ(brute_force_knn(c, q, 1).neighbors[0].id, 1u);
  const auto index = HnswIndex::build(shared(c), HnswParams{});
  EXPECT_EQ(index.query(q, 1, 4).neighbors[0].id, 1u);
  EXPECT_EQ(nearest_token(index, q).str(), "b");
}

TEST(Hnsw, SingleNode) {
  const auto index = HnswIndex::build(shared(test::small_corpus({{"a", {1, 2}}})), HnswParams{});
  EXPECT_EQ(index.size(), 1u);
  EXPECT_EQ(index.entry_point(), 0u);
  for (int l = 0; l <= index.max_level(); ++l) EXPECT_TRUE(index.neighbors(l, 0).empty());
  const std::vector<float> q{5, 5};
  EXPECT_EQ(index.query(q, 1, 1).neighbors[0].id, 0u);
}

TEST(Hnsw, DegreeCapAndAudit) {
  HnswParams p;
  p.M = 8;
  const auto index = HnswIndex::build(shared(test::gaussian_corpus(100, 6, 2)), p);
  EXPECT_EQ(index.audit(), "");
  for (std::uint32_t n = 0; n < index.size(); ++n) {
    EXPECT_LE(index.neighbors(0, n).size(), 16u);
    for (int l = 1; l <= index.level(n); ++l) EXPECT_LE(index.neighbors(l, n).size(), 8u);
  }
}

// Structural invariants restated independently of HnswIndex::audit.
TEST(Hnsw, StructuralInvariantsOn5k) {
  const auto index = HnswIndex::build(shared(test::gaussian_corpus(5000, 32, 3)), HnswParams{});
  ASSERT_EQ(index.audit(), "");
  int top = -1;
  for (std::uint32_t n = 0; n < index.size(); ++n) top = std::max(top, index.level(n));
  EXPECT_EQ(index.level(index.entry_point()), top);
  EXPECT_EQ(index.max_level(), top);
  for (std::uint32_t n = 0; n < index.size(); ++n) {
    for (int l = 0; l <= index.level(n); ++l) {
      const auto& adj = index.neighbors(l, n);
      EXPECT_LE(adj.size(), index.max_degree(l));
      for (std::uint32_t m : adj) {
        ASSERT_LT(m, index.size());
        ASSERT_GE(index.level(m), l);
        const auto& back = index.neighbors(l, m);
        EXPECT_NE(std::find(back.begin(), back.end(), n), back.end()) << "asymmetric edge " << n << "-" << m;
      }
    }
  }
}

TEST(Hnsw, SelfMatchAndFullBeamIsExact) {
  const auto corpus = shared(test::gaussian_corpus(400, 8, 4));
  const auto index = HnswIndex::build(corpus, HnswParams{});
  for (std::uint32_t i = 0; i < 400; i += 37) {
    const auto r = index.query(corpus->vector(i), 1, 64);
    EXPECT_EQ(r.neighbors[0].id, i);
    EXPECT_EQ(r.neighbors[0].distance, 0.0f);
  }
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> q(8);
    for (auto& v : q) v = static_cast<float>(rng.normal());
    const auto exact = brute_force_knn(*corpus, q, 10);
    const auto approx = index.query(q, 10, corpus->size());
    EXPECT_EQ(approx.neighbors, exact.neighbors);
  }
}

TEST(Hnsw, QueryResultsSortedAndBounded) {
  const auto corpus = shared(test::gaussian_corpus(300, 8, 5));
  const auto index = HnswIndex::build(corpus, HnswParams{});
  const auto r = index.query(corpus->vector(3), 10, 20);
  ASSERT_EQ(r.neighbors.size(), 10u);
  for (std::size_t i = 1; i < r.neighbors.size(); ++i) EXPECT_LE(r.neighbors[i - 1].distance, r.neighbors[i].distance);
  EXPECT_GT(r.distance_evaluations, 0u);
  EXPECT_THROW(index.query(corpus->vector(3), 10, 5), DataError);
}

TEST(Hnsw, DeterministicBuild) {
  const auto corpus = shared(test::gaussian_corpus(500, 8, 6));
  EXPECT_TRUE(HnswIndex::build(corpus, HnswParams{}) == HnswIndex::build(corpus, HnswParams{}));
}

TEST(Hnsw, RecallAgainstBruteForce) {
  const auto corpus = shared(test::gaussian_corpus(2000, 16, 7));
  const auto index = HnswIndex::build(corpus, HnswParams{});
  Rng rng(8);
  int hits = 0;
  for (int i = 0; i < 200; ++i) {
    std::vector<float> q(16);
    for (auto& v : q) v = static_cast<float>(rng.normal());
    hits += index.query(q, 1, 64).neighbors[0].id == brute_force_knn(*corpus, q, 1).neighbors[0].id;
  }
  EXPECT_GE(hits, 196);
}

TEST(NearestToken, ClusterMidpointLeaningTowardA) {
  // Cluster A around (+4, 0), cluster B around (-4, 0).
  Rng rng(9);
  std::vector<std::pair<std::string, std::vector<float>>> rows;
  for (int i = 0; i < 40; ++i) {
    const float cx = i < 20 ? 4.0f : -4.0f;
    rows.push_back({(i < 20 ? "a" : "b") + std::to_string(i),
                    {cx + 0.3f * static_cast<float>(rng.normal()), 0.3f * static_cast<float>(rng.normal())}});
  }
  const auto corpus = shared(test::small_corpus(rows));
  const auto index = HnswIndex::build(corpus, HnswParams{});
  const std::vector<float> e{0.8f, 0.0f};
  const auto& tok = nearest_token(index, e);
  EXPECT_EQ(tok.str()[0], 'a');
  EXPECT_EQ(tok, corpus->token(brute_force_knn(*corpus, e, 1).neighbors[0].id));
  EXPECT_EQ(nearest_token(index, corpus->vector(25)), corpus->token(25));
}

TEST(IndexIo, RoundTripQueriesIdentical) {
  test::TempDir dir("index");
  const auto corpus = shared(test::gaussian_corpus(800, 8, 10));
  const auto index = HnswIndex::build(corpus, HnswParams{});
  index.save(dir / "i.hnsw");
  const auto back = HnswIndex::load(dir / "i.hnsw", corpus);
  EXPECT_TRUE(back == index);
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    std::vector<float> q(8);
    for (auto& v : q) v = static_cast<float>(rng.normal());
    const auto a = index.query(q, 5, 64);
    const auto b = back.query(q, 5, 64);
    EXPECT_EQ(a.neighbors, b.neighbors);
    EXPECT_EQ(a.distance_evaluations, b.distance_evaluations);
  }
}

TEST(IndexIo, CorruptionDetected) {
  test::TempDir dir("index");
  const auto corpus = shared(test::gaussian_corpus(100, 4, 12));
  HnswIndex::build(corpus, HnswParams{}).save(dir / "i.hnsw");
  const std::string bytes = test::read_file(dir / "i.hnsw");

  test::write_file(dir / "trunc.hnsw", bytes.substr(0, bytes.size() - 7));
  EXPECT_THROW(HnswIndex::load(dir / "trunc.hnsw", corpus), CorruptFileError);

  std::string bumped = bytes;
  bumped[8] = static_cast<char>(bumped[8] + 1);
  test::write_file(dir / "ver.hnsw", bumped);
  EXPECT_THROW(HnswIndex::load(dir / "ver.hnsw", corpus), VersionMismatchError);

  std::string magic = bytes;
  magic[0] = 'X';
  test::write_file(dir / "magic.hnsw", magic);
  EXPECT_THROW(HnswIndex::load(dir / "magic.hnsw", corpus), CorruptFileError);

  test::write_file(dir / "extra.hnsw", bytes + "x");
  EXPECT_THROW(HnswIndex::load(dir / "extra.hnsw", corpus), CorruptFileError);

  const auto other = shared(test::gaussian_corpus(100, 4, 13));
  EXPECT_THROW(HnswIndex::load(dir / "i.hnsw", other), DataError);
}

TEST(Hnsw, EmptyCorpusRejected) {
  EXPECT_THROW(HnswIndex::build(nullptr, HnswParams{}), DataError);
}

}  // namespace
}  // namespace disp
