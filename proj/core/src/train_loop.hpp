#pragma once

#include <functional>
#include <string>
#include <vector>

#include "disp/autodiff.hpp"
#include "disp/error.hpp"
#include "disp/optimizer.hpp"
#include "disp/random.hpp"
#include "disp/training.hpp"

namespace disp::detail {

// Shuffled minibatch loop shared by the three trainers. Each example's loss
// is built on its own graph and divided by the batch normalizer (the sum of
// example weights), so one optimizer step sees the batch-mean gradient.
template <typename Example>
TrainResult train_minibatches(
    const ParameterRefs<float>& params, const TrainOptions& options,
    const std::function<std::vector<Example>(std::size_t)>& examples_for_epoch,
    const std::function<double(const Example&)>& weight,
    const std::function<Var(Graph<float>&, const Example&, float, Rng&)>& build_loss,
    const EpochCallback& on_epoch) {
  if (options.batch_size == 0) throw DataError("batch_size must be positive");
  Adam<float> adam(options.optimizer, params);
  adam.zero_grad();
  Rng dropout_rng(derive_seed(options.seed, "dropout"));
  TrainResult result;
  std::size_t batch_id = 0;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<Example> examples = examples_for_epoch(epoch);
    Rng shuffle(derive_seed(derive_seed(options.seed, "shuffle"), epoch));
    for (std::size_t i = examples.size(); i > 1; --i) {
      std::swap(examples[i - 1], examples[shuffle.uniform_index(i)]);
    }
    if (options.max_examples_per_epoch && examples.size() > options.max_examples_per_epoch) {
      examples.resize(options.max_examples_per_epoch);
    }

    double weighted_loss = 0.0;
    double total_weight = 0.0;
    for (std::size_t start = 0; start < examples.size(); start += options.batch_size, ++batch_id) {
      const std::size_t end = std::min(examples.size(), start + options.batch_size);
      double normalizer = 0.0;
      for (std::size_t i = start; i < end; ++i) normalizer += weight(examples[i]);
      if (normalizer <= 0.0) continue;
      double batch_loss = 0.0;
      try {
        for (std::size_t i = start; i < end; ++i) {
          Graph<float> g(true);
          const Var loss = build_loss(g, examples[i], static_cast<float>(normalizer), dropout_rng);
          g.backward(loss);
          batch_loss += static_cast<double>(g.value(loss)[0]);
        }
        adam.step();
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " in batch " + std::to_string(batch_id) +
                           " (epoch " + std::to_string(epoch) + ")");
      }
      ++result.steps;
      weighted_loss += batch_loss * normalizer;
      total_weight += normalizer;
    }
    const double mean = total_weight > 0.0 ? weighted_loss / total_weight : 0.0;
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

}  // namespace disp::detail
