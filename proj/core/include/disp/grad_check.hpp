#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "disp/autodiff.hpp"
#include "disp/tensor.hpp"

namespace disp {

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::size_t coordinates = 200;
  std::uint64_t seed = 0;
  // Floor on the relative-error denominator so coordinates with a near-zero
  // gradient are judged on absolute error.
  double denominator_floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

// Builds the scalar loss on the given graph; must be a deterministic function
// of the parameter values.
using LossBuilder = std::function<Var(Graph<double>&)>;

// Optional hook applied to the analytic gradients before comparison.
using GradientHook = std::function<void(const ParameterRefs<double>&)>;

// Compares reverse-mode gradients with central finite differences on a random
// subsample of coordinates. Every parameter tensor receives at least one
// coordinate; the rest are spread uniformly over all entries.
// relative error = |a - n| / max(|a|, |n|, denominator_floor).
GradCheckReport grad_check(const ParameterRefs<double>& params, const LossBuilder& build_loss,
                           const GradCheckOptions& options = {}, const GradientHook& hook = {});

}  // namespace disp
