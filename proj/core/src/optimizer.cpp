#include "disp/optimizer.hpp"

#include <cmath>

#include "disp/error.hpp"

namespace disp {

template <typename T>
Adam<T>::Adam(const AdamConfig& config, ParameterRefs<T> params)
    : config_(config), params_(std::move(params)) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto* p : params_) {
    if (!p->grad.same_shape(p->value)) p->zero_grad();
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->grad.fill(T{});
}

template <typename T>
void Adam<T>::step() {
  double sq = 0.0;
  for (auto* p : params_) {
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]);
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p->name);
      sq += g * g;
    }
  }
  last_norm_ = std::sqrt(sq);
  double factor = 1.0;
  if (config_.clip_norm > 0.0 && last_norm_ > config_.clip_norm) factor = config_.clip_norm / last_norm_;
  last_applied_norm_ = last_norm_ * factor;

  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto* p = params_[k];
    T* w = p->value.data();
    const T* gr = p->grad.data();
    T* m = m_[k].data();
    T* v = v_[k].data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = static_cast<double>(gr[i]) * factor;
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / correction1) / (std::sqrt(vi / correction2) + config_.epsilon);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
    }
  }
  zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace disp
