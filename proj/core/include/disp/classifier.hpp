#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "disp/attack.hpp"
#include "disp/autodiff.hpp"
#include "disp/encoder.hpp"
#include "disp/text.hpp"
#include "disp/training.hpp"

namespace disp {

// Linear head over the mean-pooled encoder output: C x d weight plus bias.
template <typename T>
struct ClassifierHead {
  Parameter<T> weight;
  Parameter<T> bias;

  ClassifierHead() = default;
  ClassifierHead(std::size_t num_classes, std::size_t d, std::uint64_t seed);

  template <typename Self>
  static Var apply(Self& self, Graph<T>& g, Var pooled) {
    return ops::add_row(g, ops::matmul_transposed(g, pooled, g.param(self.weight)),
                        g.param(self.bias));
  }
  Var logits(Graph<T>& g, Var pooled) { return apply(*this, g, pooled); }
  Var logits(Graph<T>& g, Var pooled) const { return apply(*this, g, pooled); }

  ParameterRefs<T> parameters() { return {&weight, &bias}; }
  ConstParameterRefs<T> parameters() const { return {&weight, &bias}; }
};

class ClassifierModel : public Classifier {
 public:
  ClassifierModel() = default;
  ClassifierModel(Vocabulary vocab, EncoderConfig config, int num_classes);

  const Vocabulary& vocab() const noexcept { return vocab_; }
  int num_classes() const noexcept { return num_classes_; }
  Encoder& encoder() noexcept { return encoder_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  ClassifierHead<float>& head() noexcept { return head_; }
  const ClassifierHead<float>& head() const noexcept { return head_; }

  ParameterRefs<float> parameters();
  ConstParameterRefs<float> parameters() const;

  // Softmax of the chunk-averaged logits; OOV surfaces map to [UNK].
  std::vector<double> probabilities(const Document& doc) const override;

  void save(const std::filesystem::path& path) const;
  static ClassifierModel load(const std::filesystem::path& path);

 private:
  Vocabulary vocab_;
  Encoder encoder_;
  ClassifierHead<float> head_;
  int num_classes_ = 2;
};

Prediction predict(const ClassifierModel& model, const Document& doc);

struct ClassifierTrainingExample {
  std::vector<int> token_ids;
  int label = 0;
};

// CE of one (chunk, label) example divided by normalizer.
template <typename T>
Var classifier_loss(Graph<T>& g, BasicEncoder<T>& encoder, ClassifierHead<T>& head,
                    const ClassifierTrainingExample& example, T normalizer, Rng* dropout_rng);

// Clean training only: documents are never perturbed here.
TrainResult train_classifier(ClassifierModel& model, const Dataset& dataset,
                             const TrainOptions& options, const EpochCallback& on_epoch = {});

double accuracy(const ClassifierModel& model, const Dataset& dataset);

}  // namespace disp
