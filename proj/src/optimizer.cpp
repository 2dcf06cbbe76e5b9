#include "siamreid/optimizer.hpp"

#include <cmath>

namespace siamreid {

void Adam::step(nn::ParameterStore& store) {
  if (m_.empty()) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      const bool live = store[i].trainable;
      m_.emplace_back(live ? Tensor(store[i].value.shape()) : Tensor());
      v_.emplace_back(live ? Tensor(store[i].value.shape()) : Tensor());
    }
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double lr_t = options_.learning_rate * std::sqrt(1.0 - std::pow(b2, t_)) / (1.0 - std::pow(b1, t_));
  // epsilon is applied to the bias-corrected second moment's root
  const double eps_hat = options_.epsilon * std::sqrt(1.0 - std::pow(b2, t_));
  for (std::size_t i = 0; i < store.size(); ++i) {
    nn::Parameter& p = store[i];
    if (!p.trainable) continue;
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = static_cast<float>(b1 * m[k] + (1.0 - b1) * g[k]);
      v[k] = static_cast<float>(b2 * v[k] + (1.0 - b2) * g[k] * g[k]);
      w[k] -= static_cast<float>(lr_t * m[k] / (std::sqrt(static_cast<double>(v[k])) + eps_hat));
    }
  }
}

}  // namespace siamreid
