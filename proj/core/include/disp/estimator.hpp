#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "disp/autodiff.hpp"
#include "disp/encoder.hpp"
#include "disp/text.hpp"
#include "disp/training.hpp"

namespace disp {

class NoTrainableWindowsError : public DataError {
 public:
  using DataError::DataError;
};

// e = T_center W, W is d x k.
template <typename T>
struct EstimatorHead {
  Parameter<T> projection;

  EstimatorHead() = default;
  EstimatorHead(std::size_t d, std::size_t k, std::uint64_t seed);

  template <typename Self>
  static Var apply(Self& self, Graph<T>& g, Var center) {
    return ops::matmul(g, center, g.param(self.projection));
  }
  Var embed(Graph<T>& g, Var center) { return apply(*this, g, center); }
  Var embed(Graph<T>& g, Var center) const { return apply(*this, g, center); }

  ParameterRefs<T> parameters() { return {&projection}; }
  ConstParameterRefs<T> parameters() const { return {&projection}; }
};

struct ContextWindow {
  std::vector<int> token_ids;          // 2w+1 ids, [MASK] at the center
  std::vector<std::uint8_t> pad_mask;  // 1 where the window overhangs the document
  std::size_t center = 0;              // always w
  std::size_t position = 0;            // source token index
};

// Window of ids[i-w .. i+w] with [PAD] beyond the edges and [MASK] at i.
ContextWindow extract_window(std::span<const int> ids, std::size_t i, std::size_t w);

struct EstimatedEmbedding {
  std::vector<float> vector;
  std::size_t position = 0;
};

class EstimatorModel {
 public:
  EstimatorModel() = default;
  // config.vocab_size is overwritten; config.max_seq_len must cover 2w+1.
  EstimatorModel(Vocabulary vocab, EncoderConfig config, std::size_t k, std::size_t w);

  const Vocabulary& vocab() const noexcept { return vocab_; }
  Encoder& encoder() noexcept { return encoder_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  EstimatorHead<float>& head() noexcept { return head_; }
  const EstimatorHead<float>& head() const noexcept { return head_; }
  std::size_t window() const noexcept { return w_; }
  std::size_t k() const noexcept { return k_; }

  ParameterRefs<float> parameters();
  ConstParameterRefs<float> parameters() const;

  void save(const std::filesystem::path& path) const;
  static EstimatorModel load(const std::filesystem::path& path);

 private:
  Vocabulary vocab_;
  Encoder encoder_;
  EstimatorHead<float> head_;
  std::size_t k_ = 0;
  std::size_t w_ = 2;
};

EstimatedEmbedding estimate(const EstimatorModel& model, const ContextWindow& window);
// Window around `position` of `doc`, encoded with the model's vocabulary.
EstimatedEmbedding estimate(const EstimatorModel& model, const Document& doc, std::size_t position);

struct EstimatorTrainingExample {
  ContextWindow window;
  std::vector<float> target;  // corpus vector of the center token
};

// (1/k) ||e - target||^2 / normalizer for one window.
template <typename T>
Var estimator_loss(Graph<T>& g, BasicEncoder<T>& encoder, EstimatorHead<T>& head,
                   const ContextWindow& window, std::span<const float> target, T normalizer,
                   Rng* dropout_rng);

// Every position of every document whose surface is in the corpus.
std::vector<EstimatorTrainingExample> enumerate_windows(std::span<const Document> docs,
                                                        const Vocabulary& vocab,
                                                        const EmbeddingCorpus& corpus,
                                                        std::size_t w);

// Throws NoTrainableWindowsError when no center token is in the corpus.
TrainResult train_estimator(EstimatorModel& model, const Dataset& dataset,
                            const EmbeddingCorpus& corpus, const TrainOptions& options,
                            const EpochCallback& on_epoch = {});

struct EstimatorError {
  double mse = 0.0;       // per dimension, averaged over windows
  double zero_mse = 0.0;  // same for the all-zeros predictor
  double rmse = 0.0;
  std::size_t windows = 0;
};

EstimatorError evaluate_estimator(const EstimatorModel& model,
                                  std::span<const EstimatorTrainingExample> windows);

}  // namespace disp
