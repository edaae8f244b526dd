#include <gtest/gtest.h>

#include "disp/recovery.hpp"
#include "pipeline_fixture.hpp"
#include "test_util.hpp"

namespace disp {
namespace {

std::shared_ptr<const EmbeddingCorpus> word_corpus() {
  return std::make_shared<const EmbeddingCorpus>(test::small_corpus({{"old-form", {0, 0, 9}},
                                                                     {"moviemaking", {3, 3, 0}},
                                                                     {"at", {0, 5, 0}},
                                                                     {"its", {5, 0, 0}},
                                                                     {"best", {1, 1, 1}},
                                                                     {"bet", {-4, -4, 0}},
                                                                     {".", {0, -6, 2}}}));
}

// Source returning each original token's own corpus vector.
EmbeddingSource ground_truth(const EmbeddingCorpus& c, const Document& clean) {
  return [&c, clean](const Document&, std::size_t p) {
    const auto v = c.vector(*c.lookup(clean.tokens[p].str()));
    return std::vector<float>(v.begin(), v.end());
  };
}

TEST(RecoverWith, EmptySetIsIdentity) {
  const auto c = word_corpus();
  const auto index = HnswIndex::build(c, HnswParams{});
  const auto doc = test::make_doc("d", 0, "old-form moviemaking at its bet .");
  const auto r = recover_with(doc, PerturbationSet{}, ground_truth(*c, doc), index);
  EXPECT_EQ(r.recovered, doc);
  EXPECT_TRUE(r.entries.empty());
}

TEST(RecoverWith, GroundTruthEmbeddingRestoresBest) {
  const auto c = word_corpus();
  const auto index = HnswIndex::build(c, HnswParams{});
  const auto clean = test::make_doc("d", 0, "old-form moviemaking at its best .");
  const auto attacked = test::make_doc("d", 0, "old-form moviemaking at its bet .");
  const auto r = recover_with(attacked, PerturbationSet{{4}}, ground_truth(*c, clean), index);
  EXPECT_EQ(r.recovered, clean);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].position, 4u);
  EXPECT_EQ(r.entries[0].original.str(), "bet");
  EXPECT_EQ(r.entries[0].recovered.str(), "best");
  EXPECT_EQ(r.entries[0].distance, 0.0f);
}

TEST(RecoverWith, ReadsFromPerturbedTextOnly) {
  const auto c = word_corpus();
  const auto index = HnswIndex::build(c, HnswParams{});
  const auto doc = test::make_doc("d", 0, "xx yy at zz");
  std::vector<std::string> seen;
  const EmbeddingSource spy = [&](const Document& d, std::size_t p) {
    seen.push_back(d.text() + "@" + std::to_string(p));
    return std::vector<float>{5, 0, 0};
  };
  const auto r = recover_with(doc, PerturbationSet{{0, 1, 3}}, spy, index);
  EXPECT_EQ(seen, (std::vector<std::string>{"xx yy at zz@0", "xx yy at zz@1", "xx yy at zz@3"}));
  EXPECT_EQ(r.recovered.text(), "its its at its");
  EXPECT_THROW(recover_with(doc, PerturbationSet{{3, 1}}, spy, index), DataError);
  EXPECT_THROW(recover_with(doc, PerturbationSet{{4}}, spy, index), DataError);
}

TEST(Recover, SingleTokenFullyFlagged) {
  const auto& p = test::small_pipeline();
  const auto doc = test::make_doc("d", 0, "whatever");
  const auto r = recover(doc, PerturbationSet{{0}}, p.models.estimator, *p.models.index);
  ASSERT_EQ(r.recovered.size(), 1u);
  EXPECT_TRUE(p.task.corpus->lookup(r.recovered.tokens[0].str()).has_value());
}

TEST(Recover, DeterministicAndPreservesLength) {
  const auto& p = test::small_pipeline();
  for (const auto& doc : std::span(p.task.test.documents).first(20)) {
    PerturbationSet flags;
    for (std::size_t i = 0; i < doc.size(); i += 3) flags.positions.push_back(i);
    const auto a = recover(doc, flags, p.models.estimator, *p.models.index);
    const auto b = recover(doc, flags, p.models.estimator, *p.models.index);
    EXPECT_EQ(a.recovered, b.recovered);
    ASSERT_EQ(a.recovered.size(), doc.size());
    EXPECT_EQ(a.entries.size(), flags.positions.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
      if (!flags.contains(i)) {
        EXPECT_EQ(a.recovered.tokens[i], doc.tokens[i]);
      }
    }
  }
}

TEST(Defend, SilentDiscriminatorIsIdempotentIdentity) {
  const auto& p = test::small_pipeline();
  DiscriminatorModel silent = p.models.discriminator;
  silent.head().weight.value.fill(0.0f);
  silent.head().bias.value.fill(0.0f);
  for (const auto& doc : std::span(p.task.test.documents).first(10)) {
    const auto once = defend(doc, silent, p.models.estimator, *p.models.index);
    EXPECT_EQ(once.recovered, doc);
    EXPECT_EQ(defend(once.recovered, silent, p.models.estimator, *p.models.index).recovered, doc);
  }
}

TEST(Defend, OracleFlagsRewriteExactlyOnePosition) {
  const auto& p = test::small_pipeline();
  const auto& doc = p.task.test.documents.front();
  const auto adv = perturb_document(doc, AttackConfig{AttackKind::Deletion, 1, 9, 10}, *p.task.corpus);
  const PerturbationSet flags{{adv.records[0].position}};
  const auto r = recover(adv.document, flags, p.models.estimator, *p.models.index);
  ASSERT_EQ(r.entries.size(), 1u);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < doc.size(); ++i) changed += r.recovered.tokens[i] != adv.document.tokens[i];
  EXPECT_LE(changed, 1u);
  EXPECT_EQ(r.entries[0].position, adv.records[0].position);
}

}  // namespace
}  // namespace disp
