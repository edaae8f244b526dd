#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "disp/classifier.hpp"
#include "disp/discriminator.hpp"
#include "disp/estimator.hpp"
#include "disp/knn_index.hpp"
#include "disp/text.hpp"

namespace disp {

class VocabularyMismatchError : public DataError {
 public:
  using DataError::DataError;
};

// Vocabulary layout: num_classes * class_tokens class-indicative tokens, then
// cue_tokens phrase markers, then neutral filler for the remainder. A document
// of label y holds a cue-wrapped phrase of a in {2, 3} class-y tokens and a
// cue-wrapped phrase of a - 1 tokens from one other class, padded with neutral
// filler to a length in [min_length, max_length]. With no neutral tokens the
// phrases alone form the document.
struct SyntheticTaskSpec {
  std::string id = "synthetic";
  std::size_t vocab_size = 2000;
  int num_classes = 2;
  std::size_t class_tokens = 50;  // per class
  std::size_t cue_tokens = 20;
  std::size_t train_docs = 8000;
  std::size_t test_docs = 500;
  std::size_t min_length = 8;
  std::size_t max_length = 24;
  std::size_t dim = 50;
  double class_spread = 0.35;    // per-coordinate sd around the group centroid
  double neutral_spread = 0.6;
  std::uint64_t corpus_seed = 1;  // pseudo-words and embeddings
  std::uint64_t seed = 1;         // documents

  std::size_t neutral_tokens() const;
  void validate() const;
};

struct SyntheticTask {
  std::string id;
  Dataset train;
  Dataset test;
  std::shared_ptr<const EmbeddingCorpus> corpus;
};

SyntheticTask generate_synthetic_task(const SyntheticTaskSpec& spec);

// Row range of class c's tokens in the generated corpus.
std::pair<std::size_t, std::size_t> class_token_rows(const SyntheticTaskSpec& spec, int c);

struct PipelineConfig {
  EncoderConfig classifier_encoder;
  EncoderConfig discriminator_encoder;
  EncoderConfig estimator_encoder;
  TrainOptions classifier_training;
  TrainOptions discriminator_training;
  TrainOptions estimator_training;
  std::size_t window = 2;
  HnswParams index;
  std::size_t vocabulary_limit = 0;  // 0 keeps every training token
};

struct ModelBundle {
  ClassifierModel classifier;
  DiscriminatorModel discriminator;
  EstimatorModel estimator;
  std::shared_ptr<const EmbeddingCorpus> corpus;
  std::shared_ptr<const HnswIndex> index;
  TrainResult classifier_trace;
  TrainResult discriminator_trace;
  TrainResult estimator_trace;
};

// Discriminator and estimator learn from `defense_train`, the classifier from
// `classifier_train`; both must pair with `corpus`.
ModelBundle train_models(const Dataset& defense_train, const Dataset& classifier_train,
                         std::shared_ptr<const EmbeddingCorpus> corpus, const PipelineConfig& config,
                         std::uint64_t seed);

struct EvalOptions {
  std::vector<AttackKind> kinds{std::begin(kAllAttackKinds), std::end(kAllAttackKinds)};
  std::size_t num_attacks = 1;
  std::size_t candidates = 50;
  std::uint64_t seed = 1;
  std::size_t ef_search = 64;
  std::size_t max_documents = 0;  // 0 = the whole test split
  std::size_t threads = 1;
  // Oracle attacks are stored here keyed by (task, kind, count, seed,
  // classifier) and reused when present. Empty disables the disk cache.
  std::filesystem::path attack_cache;
};

struct DocumentLogEntry {
  std::string doc_id;
  AttackKind kind = AttackKind::Insertion;
  int label = 0;
  int clean_prediction = 0;
  int attacked_prediction = 0;
  int defended_prediction = 0;
  int ground_truth_prediction = 0;  // flags and embeddings taken from the records
  bool flipped = false;
  std::size_t candidate = 0;
  std::vector<PerturbationRecord> records;
  std::vector<std::size_t> flagged;
  std::string recovered_text;
};

struct KindSummary {
  std::size_t documents = 0;
  double attack_free_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  double defended_accuracy = 0.0;
  double ground_truth_accuracy = 0.0;
  DetectionMetrics detection;
};

struct EvalReport {
  static constexpr int kSchemaVersion = 1;

  std::string task_id;
  std::string defense_task_id;  // task the discriminator and estimator learned from
  std::uint64_t seed = 0;
  std::size_t num_attacks = 0;
  std::size_t candidates = 0;
  std::map<AttackKind, KindSummary> per_kind;
  KindSummary overall;  // micro-average over every (document, kind) entry
  std::vector<DocumentLogEntry> log;
  std::map<std::string, std::string> metadata;
};

EvalReport run_defense_eval(const SyntheticTask& task, const ModelBundle& models,
                            const EvalOptions& options);

// Recomputes the summaries from the log; used to check report integrity.
void summarize(EvalReport& report);

struct SweepPoint {
  AttackKind kind = AttackKind::Insertion;
  std::size_t num_attacks = 1;
  double attacked_accuracy = 0.0;
  double defended_accuracy = 0.0;
};

struct SweepTable {
  std::string task_id;
  double attack_free_accuracy = 0.0;
  std::vector<SweepPoint> points;  // kind-major, num_attacks ascending
};

SweepTable run_sweep(const SyntheticTask& task, const ModelBundle& models, std::size_t max_attacks,
                     const EvalOptions& options);

// Discriminator and estimator trained on train_task, classifier on
// defend_task, evaluation on defend_task's test split.
EvalReport run_transfer_eval(const SyntheticTask& train_task, const SyntheticTask& defend_task,
                             const PipelineConfig& config, std::uint64_t model_seed,
                             const EvalOptions& options);

std::string report_to_json(const EvalReport& report);
std::string sweep_to_json(const SweepTable& table);
// Table-style CSV: one row per kind plus "overall".
std::string report_to_csv(const EvalReport& report);

// FNV-1a over every checkpointed tensor value of the classifier.
std::uint64_t model_fingerprint(const ClassifierModel& model);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace disp
