#include <gtest/gtest.h>

#include <cmath>

#include "disp/discriminator.hpp"
#include "pipeline_fixture.hpp"
#include "test_util.hpp"

namespace disp {
namespace {

EncoderConfig disc_config() {
  EncoderConfig c;
  c.d = 16;
  c.num_heads = 2;
  c.num_layers = 1;
  c.max_seq_len = 4;
  c.dropout = 0.0;
  c.seed = 2;
  return c;
}

DiscriminatorModel untrained(const std::string& text) {
  Dataset ds;
  ds.documents = {test::make_doc("0", 0, text)};
  return DiscriminatorModel(Vocabulary::from_dataset(ds), disc_config());
}

TEST(PerturbationLabels, Construction) {
  const std::vector<PerturbationRecord> recs{{2, AttackKind::Swap, Token("best"), Token("bset")}};
  EXPECT_EQ(perturbation_labels(5, recs), (std::vector<int>{0, 0, 1, 0, 0}));
  const auto c = test::small_corpus({{"x", {0}}, {"y", {1}}});
  const auto doc = test::make_doc("d", 0, "one two three four five six");
  const auto p = perturb_document(doc, AttackConfig{AttackKind::Insertion, 3, 4, 10}, c);
  const auto labels = perturbation_labels(doc.size(), p.records);
  EXPECT_EQ(std::count(labels.begin(), labels.end(), 1), 3);
}

TEST(Discriminate, TieResolvesToClean) {
  auto m = untrained("a b c d e f");
  auto& h = m.head();
  for (std::size_t c = 0; c < h.weight.value.cols(); ++c) h.weight.value(1, c) = h.weight.value(0, c);
  h.bias.value.fill(0.0f);
  const auto r = discriminate(m, test::make_doc("x", 0, "a b c d e f"));
  EXPECT_TRUE(r.flagged.positions.empty());
  for (std::size_t i = 0; i < r.logits.rows(); ++i) EXPECT_EQ(r.logits(i, 0), r.logits(i, 1));
}

TEST(Discriminate, BiasDominatedFlagsEverythingAcrossChunks) {
  auto m = untrained("a b c");
  m.head().weight.value.fill(0.0f);
  m.head().bias.value(0, 1) = 10.0f;
  // 10 tokens with max_seq_len 4: three chunks.
  const auto doc = test::make_doc("x", 0, "a b c a b c unseen words here too");
  const auto r = discriminate(m, doc);
  EXPECT_EQ(r.logits.rows(), doc.size());
  ASSERT_EQ(r.flagged.positions.size(), doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) EXPECT_EQ(r.flagged.positions[i], i);
}

TEST(Discriminate, DeterministicAndProbabilitiesNormalized) {
  const auto m = untrained("a b c d");
  const auto doc = test::make_doc("x", 0, "a b c d");
  const auto r1 = discriminate(m, doc);
  const auto r2 = discriminate(m, doc);
  EXPECT_EQ(r1.logits, r2.logits);
  EXPECT_EQ(r1.flagged, r2.flagged);
  for (std::size_t i = 0; i < r1.logits.rows(); ++i) {
    const std::vector<double> logits{r1.logits(i, 0), r1.logits(i, 1)};
    const auto p = softmax<double>(logits);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-6);
  }
}

TEST(DiscriminatorLoss, ZeroHeadGivesLn2PerToken) {
  BasicEncoder<double> enc = Encoder([] {
                               auto c = disc_config();
                               c.vocab_size = 10;
                               return c;
                             }())
                                 .cast<double>();
  DiscriminatorHead<double> head(16, 1);
  head.weight.value.fill(0.0);
  head.bias.value.fill(0.0);
  DiscriminatorTrainingExample ex{{4, 5, 6, 0}, {0, 1, 0, 0}, {0, 0, 0, 1}};
  Graph<double> g;
  const Var loss = discriminator_loss(g, enc, head, ex, 3.0, nullptr);
  EXPECT_NEAR(g.value(loss)[0], std::log(2.0), 1e-12);
}

TEST(BuildTrainingBatch, LabelsMarkOnlyChangedPositions) {
  const auto& p = test::small_pipeline();
  const auto docs = std::span<const Document>(p.task.train.documents).first(100);
  const auto& vocab = p.models.discriminator.vocab();
  const auto batch = build_training_batch(docs, vocab, *p.task.corpus, 7, 0, 64);
  ASSERT_EQ(batch.size(), docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto clean = vocab.encode(docs[d].tokens);
    const auto& ex = batch[d];
    ASSERT_EQ(ex.labels.size(), clean.size());
    const auto ones = std::count(ex.labels.begin(), ex.labels.end(), 1);
    EXPECT_GE(ones, 1);
    EXPECT_LE(ones, 3);
    for (std::size_t i = 0; i < clean.size(); ++i) {
      if (ex.labels[i] == 0) {
        EXPECT_EQ(ex.token_ids[i], clean[i]);
      }
    }
  }
}

TEST(BuildTrainingBatch, ResampledPerEpoch) {
  const auto& p = test::small_pipeline();
  const auto docs = std::span<const Document>(p.task.train.documents).first(100);
  const auto& vocab = p.models.discriminator.vocab();
  const auto e0 = build_training_batch(docs, vocab, *p.task.corpus, 7, 0, 64);
  const auto e0b = build_training_batch(docs, vocab, *p.task.corpus, 7, 0, 64);
  const auto e1 = build_training_batch(docs, vocab, *p.task.corpus, 7, 1, 64);
  std::size_t differing = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    EXPECT_EQ(e0[d].labels, e0b[d].labels);
    differing += e0[d].labels != e1[d].labels || e0[d].token_ids != e1[d].token_ids;
  }
  EXPECT_GT(differing, 50u);
}

TEST(BuildTrainingBatch, SkipsUnattackableAndChunks) {
  Dataset ds;
  ds.documents = {test::make_doc("0", 0, "1 2 3 , ."), test::make_doc("1", 0, "a b c d e f g h i j")};
  const auto vocab = Vocabulary::from_dataset(ds);
  const auto c = test::small_corpus({{"x", {0}}, {"y", {1}}});
  const auto batch = build_training_batch(ds.documents, vocab, c, 1, 0, 4);
  ASSERT_EQ(batch.size(), 3u);
  EXPECT_EQ(batch[0].token_ids.size(), 4u);
  EXPECT_EQ(batch[2].token_ids.size(), 2u);
}

TEST(DetectionMetricsTest, Arithmetic) {
  const auto m = detection_metrics(2, 1, 1);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);
  const auto empty = detection_metrics(0, 0, 4);
  EXPECT_EQ(empty.precision, 0.0);
  EXPECT_EQ(empty.recall, 0.0);
  EXPECT_EQ(empty.f1, 0.0);
}

TEST(EvalDiscriminator, PerKindAndPerfect) {
  std::vector<std::vector<PerturbationRecord>> truth{
      {{1, AttackKind::Insertion, Token("a"), Token("ab")}},
      {{0, AttackKind::Embed, Token("x"), Token("y")}, {2, AttackKind::Embed, Token("z"), Token("y")}},
      {}};
  std::vector<PerturbationSet> perfect{{{1}}, {{0, 2}}, {{}}};
  const auto ok = eval_discriminator(perfect, truth);
  EXPECT_EQ(ok.overall.f1, 1.0);
  EXPECT_EQ(ok.per_kind.at(AttackKind::Embed).true_positives, 2u);

  std::vector<PerturbationSet> noisy{{{1}}, {{0, 3}}, {{4}}};
  const auto r = eval_discriminator(noisy, truth);
  EXPECT_EQ(r.per_kind.at(AttackKind::Insertion).f1, 1.0);
  const auto& e = r.per_kind.at(AttackKind::Embed);
  EXPECT_EQ(e.true_positives, 1u);
  EXPECT_EQ(e.false_positives, 1u);
  EXPECT_EQ(e.false_negatives, 1u);
  EXPECT_EQ(r.overall.true_positives, 2u);
  EXPECT_EQ(r.overall.false_positives, 2u);
  EXPECT_GE(r.overall.f1, 0.0);
  EXPECT_LT(r.overall.f1, 1.0);
  EXPECT_THROW(eval_discriminator(std::span(noisy).first(2), truth), DataError);
}

TEST(TrainedDiscriminator, LossDecreasesAndDetectsInsertions) {
  const auto& p = test::small_pipeline();
  const auto& trace = p.models.discriminator_trace.epoch_loss;
  ASSERT_GE(trace.size(), 2u);
  EXPECT_LT(trace.back(), trace.front());

  std::vector<PerturbationSet> preds;
  std::vector<std::vector<PerturbationRecord>> truth;
  for (const auto& doc : p.task.test.documents) {
    const auto adv = perturb_document(doc, AttackConfig{AttackKind::Insertion, 1, 3, 10}, *p.task.corpus);
    preds.push_back(discriminate(p.models.discriminator, adv.document).flagged);
    truth.push_back(adv.records);
  }
  const auto r = eval_discriminator(preds, truth);
  EXPECT_GT(r.overall.f1, 0.8);
}

TEST(DiscriminatorCheckpoint, RoundTripIsBitIdentical) {
  test::TempDir dir("disc");
  const auto& p = test::small_pipeline();
  p.models.discriminator.save(dir / "d.ckpt");
  const auto back = DiscriminatorModel::load(dir / "d.ckpt");
  EXPECT_EQ(back.vocab(), p.models.discriminator.vocab());
  for (const auto& doc : std::span(p.task.test.documents).first(20)) {
    EXPECT_EQ(discriminate(back, doc).logits, discriminate(p.models.discriminator, doc).logits);
  }
}

}  // namespace
}  // namespace disp
