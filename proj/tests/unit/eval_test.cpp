#include <gtest/gtest.h>

#include <json.hpp>
#include <set>

#include "disp/eval.hpp"
#include "pipeline_fixture.hpp"
#include "test_util.hpp"

namespace disp {
namespace {

EvalOptions quick_options() {
  EvalOptions o;
  o.max_documents = 40;
  o.candidates = 20;
  return o;
}

TEST(SyntheticTaskTest, DeterministicForSeed) {
  const auto spec = test::small_task_spec();
  const auto a = generate_synthetic_task(spec);
  const auto b = generate_synthetic_task(spec);
  EXPECT_EQ(a.train.documents, b.train.documents);
  EXPECT_EQ(a.test.documents, b.test.documents);
  EXPECT_EQ(a.corpus->content_hash(), b.corpus->content_hash());
  test::TempDir dir("task");
  save_dataset(a.train, dir / "a.tsv");
  save_dataset(b.train, dir / "b.tsv");
  EXPECT_EQ(test::read_file(dir / "a.tsv"), test::read_file(dir / "b.tsv"));
  auto other = spec;
  other.seed = 99;
  EXPECT_NE(generate_synthetic_task(other).train.documents, a.train.documents);
}

TEST(SyntheticTaskTest, ShapeAndDisjointClassSets) {
  const auto spec = test::small_task_spec();
  const auto t = generate_synthetic_task(spec);
  EXPECT_EQ(t.train.size(), spec.train_docs);
  EXPECT_EQ(t.test.size(), spec.test_docs);
  EXPECT_EQ(t.corpus->size(), spec.vocab_size);
  std::set<std::string> c0, c1;
  for (std::size_t r = class_token_rows(spec, 0).first; r < class_token_rows(spec, 0).second; ++r)
    c0.insert(t.corpus->token(r).str());
  for (std::size_t r = class_token_rows(spec, 1).first; r < class_token_rows(spec, 1).second; ++r)
    c1.insert(t.corpus->token(r).str());
  EXPECT_EQ(c0.size(), spec.class_tokens);
  EXPECT_EQ(c1.size(), spec.class_tokens);
  for (const auto& w : c0) EXPECT_FALSE(c1.contains(w));
  for (const auto& d : t.train.documents) {
    EXPECT_GE(d.size(), spec.min_length);
    EXPECT_LE(d.size(), spec.max_length);
    std::size_t own = 0, foreign = 0;
    for (const auto& tok : d.tokens) {
      own += (d.label == 0 ? c0 : c1).contains(tok.str());
      foreign += (d.label == 0 ? c1 : c0).contains(tok.str());
    }
    EXPECT_EQ(own, foreign + 1);
  }
}

TEST(SyntheticTaskTest, NoNeutralTokensMeansAllClassIndicative) {
  auto spec = test::small_task_spec();
  spec.cue_tokens = 0;
  spec.vocab_size = spec.class_tokens * 2;
  spec.train_docs = 50;
  const auto t = generate_synthetic_task(spec);
  EXPECT_EQ(spec.neutral_tokens(), 0u);
  for (const auto& d : t.train.documents) {
    for (const auto& tok : d.tokens) EXPECT_LT(*t.corpus->lookup(tok.str()), spec.class_tokens * 2);
  }
}

TEST(SyntheticTaskTest, IntraClassCloserThanInterClass) {
  const auto spec = test::small_task_spec();
  const auto t = generate_synthetic_task(spec);
  double intra = 0.0, inter = 0.0;
  std::size_t ni = 0, nx = 0;
  const auto [b0, e0] = class_token_rows(spec, 0);
  const auto [b1, e1] = class_token_rows(spec, 1);
  for (std::size_t i = b0; i < e0; ++i) {
    for (std::size_t j = i + 1; j < e0; ++j, ++ni) intra += squared_l2(t.corpus->vector(i), t.corpus->vector(j));
    for (std::size_t j = b1; j < e1; ++j, ++nx) inter += squared_l2(t.corpus->vector(i), t.corpus->vector(j));
  }
  EXPECT_LT(intra / static_cast<double>(ni), inter / static_cast<double>(nx));
}

TEST(SyntheticTaskTest, InvalidSpecRejected) {
  auto spec = test::small_task_spec();
  spec.class_tokens = 300;
  EXPECT_THROW(generate_synthetic_task(spec), DataError);
  spec = test::small_task_spec();
  spec.min_length = 30;
  EXPECT_THROW(generate_synthetic_task(spec), DataError);
}

TEST(DefenseEval, ZeroAttacksLeaveAccuracyUnchanged) {
  const auto& p = test::small_pipeline();
  auto o = quick_options();
  o.num_attacks = 0;
  o.kinds = {AttackKind::Insertion, AttackKind::Random};
  const auto r = run_defense_eval(p.task, p.models, o);
  EXPECT_EQ(r.overall.attacked_accuracy, r.overall.attack_free_accuracy);
  for (const auto& e : r.log) EXPECT_TRUE(e.records.empty());
}

TEST(DefenseEval, LogIntegrityAndRanges) {
  const auto& p = test::small_pipeline();
  const auto r = run_defense_eval(p.task, p.models, quick_options());
  EXPECT_EQ(r.log.size(), 40u * 5u);
  EXPECT_EQ(r.per_kind.size(), 5u);
  // Recount from the log without summarize().
  std::size_t clean = 0, attacked = 0, defended = 0;
  for (const auto& e : r.log) {
    clean += e.clean_prediction == e.label;
    attacked += e.attacked_prediction == e.label;
    defended += e.defended_prediction == e.label;
  }
  const double n = static_cast<double>(r.log.size());
  EXPECT_DOUBLE_EQ(r.overall.attack_free_accuracy, clean / n);
  EXPECT_DOUBLE_EQ(r.overall.attacked_accuracy, attacked / n);
  EXPECT_DOUBLE_EQ(r.overall.defended_accuracy, defended / n);
  // Overall is the micro-average of equally sized kinds.
  double mean_attacked = 0.0;
  for (const auto& [k, s] : r.per_kind) {
    EXPECT_EQ(s.documents, 40u);
    for (double a : {s.attack_free_accuracy, s.attacked_accuracy, s.defended_accuracy, s.ground_truth_accuracy}) {
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
    }
    mean_attacked += s.attacked_accuracy / 5.0;
  }
  EXPECT_NEAR(mean_attacked, r.overall.attacked_accuracy, 1e-12);
  EvalReport copy = r;
  summarize(copy);
  EXPECT_EQ(report_to_json(copy), report_to_json(r));
}

TEST(DefenseEval, ByteReproducibleAndThreadIndependent) {
  const auto& p = test::small_pipeline();
  auto o = quick_options();
  o.kinds = {AttackKind::Swap, AttackKind::Embed};
  const auto a = report_to_json(run_defense_eval(p.task, p.models, o));
  EXPECT_EQ(a, report_to_json(run_defense_eval(p.task, p.models, o)));
  o.threads = 3;
  EXPECT_EQ(a, report_to_json(run_defense_eval(p.task, p.models, o)));
}

TEST(DefenseEval, AttackCacheReusedAcrossRuns) {
  const auto& p = test::small_pipeline();
  test::TempDir dir("cache");
  auto o = quick_options();
  o.kinds = {AttackKind::Deletion};
  const auto uncached = report_to_json(run_defense_eval(p.task, p.models, o));
  o.attack_cache = dir.path();
  const auto first = report_to_json(run_defense_eval(p.task, p.models, o));
  std::size_t files = 0;
  for (const auto& f : std::filesystem::directory_iterator(dir.path())) {
    ++files;
    EXPECT_EQ(f.path().filename().string().rfind("attacks-deletion-1-", 0), 0u);
  }
  EXPECT_EQ(files, 1u);
  EXPECT_EQ(first, uncached);
  EXPECT_EQ(report_to_json(run_defense_eval(p.task, p.models, o)), first);
}

TEST(DefenseEval, JsonAndCsvLayout) {
  const auto& p = test::small_pipeline();
  auto o = quick_options();
  o.kinds = {AttackKind::Insertion, AttackKind::Embed};
  const auto r = run_defense_eval(p.task, p.models, o);
  const auto j = nlohmann::json::parse(report_to_json(r));
  EXPECT_EQ(j.at("schema_version"), EvalReport::kSchemaVersion);
  EXPECT_EQ(j.at("task_id"), "unit");
  EXPECT_TRUE(j.at("per_kind").contains("insertion"));
  EXPECT_EQ(j.at("log").size(), r.log.size());
  const auto csv = report_to_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find("\ninsertion,"), std::string::npos);
  EXPECT_NE(csv.find("\noverall,"), std::string::npos);
}

TEST(DefenseEval, CorpusMismatchRejected) {
  const auto& p = test::small_pipeline();
  auto spec = test::small_task_spec();
  spec.corpus_seed = 5;
  spec.train_docs = 10;
  const auto other = generate_synthetic_task(spec);
  EXPECT_THROW(run_defense_eval(other, p.models, quick_options()), VocabularyMismatchError);
  EXPECT_THROW(run_transfer_eval(other, p.task, test::small_pipeline_config(), 1, quick_options()),
               VocabularyMismatchError);
}

TEST(Sweep, Shape) {
  const auto& p = test::small_pipeline();
  auto o = quick_options();
  o.max_documents = 10;
  o.candidates = 5;
  o.kinds = {AttackKind::Insertion, AttackKind::Random};
  const auto t = run_sweep(p.task, p.models, 3, o);
  ASSERT_EQ(t.points.size(), 6u);
  EXPECT_EQ(t.points[0].kind, AttackKind::Insertion);
  EXPECT_EQ(t.points[2].num_attacks, 3u);
  EXPECT_EQ(t.points[3].kind, AttackKind::Random);
  EXPECT_EQ(nlohmann::json::parse(sweep_to_json(t)).at("points").size(), 6u);
  EXPECT_THROW(run_sweep(p.task, p.models, 0, o), DataError);
}

TEST(Transfer, DegenerateTransferMatchesDirectEval) {
  auto spec = test::small_task_spec();
  spec.train_docs = 300;
  const auto task = generate_synthetic_task(spec);
  auto cfg = test::small_pipeline_config();
  for (TrainOptions* t : {&cfg.classifier_training, &cfg.discriminator_training, &cfg.estimator_training}) t->epochs = 1;
  auto o = quick_options();
  o.max_documents = 15;
  o.candidates = 5;
  const auto models = train_models(task.train, task.train, task.corpus, cfg, 3);
  const auto direct = run_defense_eval(task, models, o);
  const auto transfer = run_transfer_eval(task, task, cfg, 3, o);
  EXPECT_EQ(report_to_json(transfer), report_to_json(direct));

  auto spec_b = spec;
  spec_b.id = "unit-b";
  spec_b.seed = 2;
  const auto task_b = generate_synthetic_task(spec_b);
  const auto tb = run_transfer_eval(task, task_b, cfg, 3, o);
  EXPECT_EQ(tb.task_id, "unit-b");
  EXPECT_EQ(tb.defense_task_id, "unit");
}

TEST(ParallelFor, CoversEveryIndexAndRethrows) {
  std::vector<int> hit(100, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw DataError("boom");
                            }),
               DataError);
}

}  // namespace
}  // namespace disp
