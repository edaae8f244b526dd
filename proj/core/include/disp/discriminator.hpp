#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "disp/autodiff.hpp"
#include "disp/encoder.hpp"
#include "disp/text.hpp"
#include "disp/training.hpp"

namespace disp {

// Per-token logistic regression over contextual representations:
// y_i^c = w_c . T_i + b_c.
template <typename T>
struct DiscriminatorHead {
  Parameter<T> weight;  // 2 x d, row c is w_c
  Parameter<T> bias;    // 1 x 2

  DiscriminatorHead() = default;
  DiscriminatorHead(std::size_t d, std::uint64_t seed);

  template <typename Self>
  static Var apply(Self& self, Graph<T>& g, Var representations) {
    return ops::add_row(g, ops::matmul_transposed(g, representations, g.param(self.weight)),
                        g.param(self.bias));
  }
  Var logits(Graph<T>& g, Var reps) { return apply(*this, g, reps); }
  Var logits(Graph<T>& g, Var reps) const { return apply(*this, g, reps); }

  ParameterRefs<T> parameters() { return {&weight, &bias}; }
  ConstParameterRefs<T> parameters() const { return {&weight, &bias}; }
};

struct DiscriminatorTrainingExample {
  std::vector<int> token_ids;
  std::vector<int> labels;             // 1 at perturbed positions
  std::vector<std::uint8_t> pad_mask;  // padded positions carry label 0 and no loss
};

// Flagged token positions, ascending.
struct PerturbationSet {
  std::vector<std::size_t> positions;

  bool contains(std::size_t p) const;
  friend bool operator==(const PerturbationSet&, const PerturbationSet&) = default;
};

class DiscriminatorModel {
 public:
  DiscriminatorModel() = default;
  // config.vocab_size is overwritten with the vocabulary size.
  DiscriminatorModel(Vocabulary vocab, EncoderConfig config);

  const Vocabulary& vocab() const noexcept { return vocab_; }
  Encoder& encoder() noexcept { return encoder_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  DiscriminatorHead<float>& head() noexcept { return head_; }
  const DiscriminatorHead<float>& head() const noexcept { return head_; }

  ParameterRefs<float> parameters();
  ConstParameterRefs<float> parameters() const;

  void save(const std::filesystem::path& path) const;
  static DiscriminatorModel load(const std::filesystem::path& path);

 private:
  Vocabulary vocab_;
  Encoder encoder_;
  DiscriminatorHead<float> head_;
};

struct DiscriminationResult {
  PerturbationSet flagged;
  Matrix<float> logits;  // N x 2
};

// r_i = argmax_c y_i^c with ties resolving to 0. Documents longer than
// max_seq_len are split into non-overlapping chunks.
DiscriminationResult discriminate(const DiscriminatorModel& model, const Document& doc);

// Token-averaged cross-entropy contribution of one example:
// sum over unpadded tokens of CE / normalizer.
template <typename T>
Var discriminator_loss(Graph<T>& g, BasicEncoder<T>& encoder, DiscriminatorHead<T>& head,
                       const DiscriminatorTrainingExample& example, T normalizer,
                       Rng* dropout_rng);

// Labels for a document of `length` tokens perturbed at `records`.
std::vector<int> perturbation_labels(std::size_t length, std::span<const PerturbationRecord> records);

// One epoch of training data: every document perturbed with a uniformly drawn
// attack kind and 1-3 attacks (clamped to what the document allows). Streams
// depend on (seed, epoch, document id). Documents with no attackable token
// are skipped. Examples longer than max_seq_len are chunked.
std::vector<DiscriminatorTrainingExample> build_training_batch(std::span<const Document> docs,
                                                               const Vocabulary& vocab,
                                                               const EmbeddingCorpus& corpus,
                                                               std::uint64_t seed,
                                                               std::size_t epoch,
                                                               std::size_t max_seq_len);

// Joint encoder + head training on freshly perturbed data every epoch.
TrainResult train_discriminator(DiscriminatorModel& model, const Dataset& dataset,
                                const EmbeddingCorpus& corpus, const TrainOptions& options,
                                const EpochCallback& on_epoch = {});

struct DetectionMetrics {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Precision with zero predictions is 0; F1 is 0 when P + R = 0.
DetectionMetrics detection_metrics(std::size_t tp, std::size_t fp, std::size_t fn);

struct DiscriminatorEvaluation {
  std::map<AttackKind, DetectionMetrics> per_kind;
  DetectionMetrics overall;
};

// Micro-averaged over documents. A document's kind is the kind of its
// records; documents without records count toward the overall row only.
DiscriminatorEvaluation eval_discriminator(std::span<const PerturbationSet> predictions,
                                           std::span<const std::vector<PerturbationRecord>> truth);

}  // namespace disp
