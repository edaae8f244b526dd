#include <gtest/gtest.h>

#include <numeric>

#include "disp/checkpoint.hpp"
#include "disp/classifier.hpp"
#include "pipeline_fixture.hpp"
#include "test_util.hpp"

namespace disp {
namespace {

EncoderConfig clf_config() {
  EncoderConfig c;
  c.d = 16;
  c.num_heads = 2;
  c.num_layers = 1;
  c.max_seq_len = 8;
  c.seed = 4;
  return c;
}

Dataset two_word_task() {
  Dataset ds;
  Rng rng(3);
  const std::vector<std::string> filler{"the", "a", "movie", "was", "very", "plot", "and"};
  for (int i = 0; i < 200; ++i) {
    const int label = i % 2;
    std::string text;
    for (int j = 0; j < 4; ++j) text += filler[rng.uniform_index(filler.size())] + " ";
    text += label ? "good" : "bad";
    ds.documents.push_back(test::make_doc(std::to_string(i), label, text));
  }
  return ds;
}

TEST(TrainClassifier, SeparableTaskReachesHighAccuracy) {
  const auto ds = two_word_task();
  ClassifierModel m(Vocabulary::from_dataset(ds), clf_config(), 2);
  TrainOptions opts;
  opts.epochs = 5;
  opts.seed = 1;
  const auto trace = train_classifier(m, ds, opts);
  EXPECT_GE(accuracy(m, ds), 0.99);
  EXPECT_LT(trace.epoch_loss.back(), trace.epoch_loss.front());
}

TEST(TrainClassifier, ConstantLabel) {
  auto ds = two_word_task();
  for (auto& d : ds.documents) d.label = 1;
  ClassifierModel m(Vocabulary::from_dataset(ds), clf_config(), 2);
  TrainOptions opts;
  opts.epochs = 2;
  train_classifier(m, ds, opts);
  EXPECT_EQ(accuracy(m, ds), 1.0);
}

TEST(TrainClassifier, RejectsTestSplitAndClassMismatch) {
  auto ds = two_word_task();
  ClassifierModel m(Vocabulary::from_dataset(ds), clf_config(), 3);
  EXPECT_THROW(train_classifier(m, ds, TrainOptions{}), DataError);
  ds.split = Split::Test;
  ClassifierModel m2(Vocabulary::from_dataset(ds), clf_config(), 2);
  EXPECT_THROW(train_classifier(m2, ds, TrainOptions{}), DataError);
}

TEST(Predict, ConfidenceRangeNormalizationDeterminism) {
  const auto ds = two_word_task();
  ClassifierModel m(Vocabulary::from_dataset(ds), clf_config(), 3);
  for (const auto& doc : std::span(ds.documents).first(20)) {
    const auto probs = m.probabilities(doc);
    ASSERT_EQ(probs.size(), 3u);
    EXPECT_NEAR(std::accumulate(probs.begin(), probs.end(), 0.0), 1.0, 1e-6);
    const auto p = predict(m, doc);
    EXPECT_GT(p.confidence, 1.0 / 3.0);
    EXPECT_LE(p.confidence, 1.0);
    EXPECT_EQ(p.label, predict(m, doc).label);
    EXPECT_EQ(p.confidence, predict(m, doc).confidence);
  }
  // Longer than max_seq_len and entirely OOV.
  const auto long_doc = test::make_doc("l", 0, "zz yy xx ww vv uu tt ss rr qq pp oo");
  const auto lp = m.probabilities(long_doc);
  EXPECT_NEAR(std::accumulate(lp.begin(), lp.end(), 0.0), 1.0, 1e-6);
}

TEST(ClassifierCheckpoint, RoundTripAndKindCheck) {
  test::TempDir dir("clf");
  const auto& p = test::small_pipeline();
  p.models.classifier.save(dir / "c.ckpt");
  const auto back = ClassifierModel::load(dir / "c.ckpt");
  EXPECT_EQ(back.num_classes(), p.models.classifier.num_classes());
  for (const auto& doc : p.task.test.documents) {
    EXPECT_EQ(back.probabilities(doc), p.models.classifier.probabilities(doc));
  }
  p.models.discriminator.save(dir / "d.ckpt");
  EXPECT_THROW(ClassifierModel::load(dir / "d.ckpt"), DataError);
}

TEST(CheckpointFormat, CorruptionDetected) {
  test::TempDir dir("ckpt");
  const auto& p = test::small_pipeline();
  p.models.classifier.save(dir / "c.ckpt");
  const std::string bytes = test::read_file(dir / "c.ckpt");
  EXPECT_EQ(bytes.substr(0, 8), "DISPCKPT");
  test::write_file(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(dir / "trunc.ckpt"), CorruptFileError);
  std::string bumped = bytes;
  bumped[8] = static_cast<char>(bumped[8] + 1);
  test::write_file(dir / "ver.ckpt", bumped);
  EXPECT_THROW(read_checkpoint(dir / "ver.ckpt"), VersionMismatchError);
  test::write_file(dir / "extra.ckpt", bytes + "junk");
  EXPECT_THROW(read_checkpoint(dir / "extra.ckpt"), CorruptFileError);
  const auto ck = read_checkpoint(dir / "c.ckpt");
  EXPECT_EQ(ck.header.kind, "classifier");
  EXPECT_EQ(ck.tensors.size(), p.models.classifier.parameters().size());
}

TEST(TrainedClassifier, LearnsSyntheticTask) {
  const auto& p = test::small_pipeline();
  const auto& trace = p.models.classifier_trace.epoch_loss;
  EXPECT_LT(trace.back(), trace.front());
  Dataset test_split = p.task.test;
  EXPECT_GT(accuracy(p.models.classifier, test_split), 0.8);
}

// Re-score the 50 stored candidates: oracle_attack flips iff any does, and
// otherwise picks the least confident one.
TEST(TrainedClassifier, OracleContractAgainstStoredCandidates) {
  const auto& p = test::small_pipeline();
  const auto& clf = p.models.classifier;
  std::size_t flips = 0;
  for (const auto& doc : std::span(p.task.test.documents).first(30)) {
    const AttackConfig cfg{AttackKind::Swap, 1, 17, 10};
    const auto cands = generate_candidates(doc, cfg, *p.task.corpus, 50);
    const int orig = predict(clf, doc).label;
    std::optional<std::size_t> first_flip;
    std::size_t least = 0;
    double least_conf = 2.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const auto probs = clf.probabilities(cands[i].document);
      const int lbl = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      if (lbl != orig && !first_flip) first_flip = i;
      if (probs[orig] < least_conf) {
        least_conf = probs[orig];
        least = i;
      }
    }
    const auto r = oracle_attack(doc, clf, cfg, *p.task.corpus, 50);
    EXPECT_EQ(r.flipped, first_flip.has_value());
    EXPECT_EQ(r.candidate_index, first_flip.value_or(least));
    EXPECT_EQ(r.adversarial.document, cands[r.candidate_index].document);
    flips += r.flipped;
  }
  EXPECT_GT(flips, 0u);
}

}  // namespace
}  // namespace disp
