#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disp/grad_check.hpp"

namespace disp {

struct NamedGradCheck {
  std::string model;  // "discriminator", "estimator" or "classifier"
  GradCheckReport report;
};

// Finite-difference check of each trainable model's full objective on a
// 1-layer d=16 encoder in 64-bit. Parameters are drawn at a larger scale than
// the training init so no gradient is numerically negligible.
std::vector<NamedGradCheck> grad_check_models(const GradCheckOptions& options,
                                              std::uint64_t seed);

}  // namespace disp
