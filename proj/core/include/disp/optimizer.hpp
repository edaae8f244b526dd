#pragma once

#include <cstddef>
#include <vector>

#include "disp/tensor.hpp"

namespace disp {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm threshold; 0 disables clipping
};

// Adaptive-moment optimizer with bias correction. Global-norm clipping is
// applied to the accumulated gradients before the moment update.
template <typename T>
class Adam {
 public:
  Adam(const AdamConfig& config, ParameterRefs<T> params);

  // One update from the gradients currently held by the parameters, which
  // are zeroed afterwards. Throws NumericError on a non-finite gradient.
  void step();
  void zero_grad();

  std::size_t step_count() const noexcept { return steps_; }
  // Global gradient norm before clipping and after, for the last step.
  double last_gradient_norm() const noexcept { return last_norm_; }
  double last_applied_norm() const noexcept { return last_applied_norm_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<Matrix<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Matrix<T>>& second_moments() const noexcept { return v_; }

 private:
  AdamConfig config_;
  ParameterRefs<T> params_;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  std::size_t steps_ = 0;
  double last_norm_ = 0.0;
  double last_applied_norm_ = 0.0;
};

}  // namespace disp
