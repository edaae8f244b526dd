#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "disp/optimizer.hpp"

namespace disp {

struct TrainOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  AdamConfig optimizer;
  std::uint64_t seed = 0;
  // Caps examples drawn per epoch (0 = all), sampled after the shuffle.
  std::size_t max_examples_per_epoch = 0;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean loss per epoch
  std::size_t steps = 0;
};

// Called after each epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

}  // namespace disp
