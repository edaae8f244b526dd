#include "disp/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "disp/random.hpp"

namespace disp {

GradCheckReport grad_check(const ParameterRefs<double>& params, const LossBuilder& build_loss,
                           const GradCheckOptions& options, const GradientHook& hook) {
  for (auto* p : params) p->zero_grad();
  {
    Graph<double> g(true);
    g.backward(build_loss(g));
  }
  if (hook) hook(params);

  std::size_t total = 0;
  for (auto* p : params) total += p->value.size();

  // (parameter, entry) pairs; one per tensor, then uniform fill.
  std::set<std::pair<std::size_t, std::size_t>> chosen;
  Rng rng(derive_seed(options.seed, "grad-check"));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->value.size() == 0) continue;
    chosen.insert({k, rng.uniform_index(params[k]->value.size())});
  }
  const std::size_t target = std::min(total, std::max(options.coordinates, chosen.size()));
  while (chosen.size() < target) {
    std::size_t flat = rng.uniform_index(total);
    std::size_t k = 0;
    while (flat >= params[k]->value.size()) flat -= params[k++]->value.size();
    chosen.insert({k, flat});
  }

  auto evaluate = [&]() {
    Graph<double> g(false);
    return g.value(build_loss(g))[0];
  };

  GradCheckReport report;
  for (const auto& [k, idx] : chosen) {
    auto* p = params[k];
    const double saved = p->value[idx];
    p->value[idx] = saved + options.step;
    const double up = evaluate();
    p->value[idx] = saved - options.step;
    const double down = evaluate();
    p->value[idx] = saved;

    const double numeric = (up - down) / (2.0 * options.step);
    const double analytic = p->grad[idx];
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.coordinates_checked;
    if (rel > report.max_relative_error || !std::isfinite(rel)) {
      report.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
      report.worst_parameter = p->name;
      report.worst_index = idx;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace disp
