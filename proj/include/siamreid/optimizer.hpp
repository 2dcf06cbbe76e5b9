#pragma once

#include <vector>

#include "siamreid/nn/parameters.hpp"
#include "siamreid/tensor.hpp"

namespace siamreid {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// Adam with bias correction. Only trainable parameters are touched.
class Adam {
 public:
  explicit Adam(AdamOptions options) : options_(options) {}

  void step(nn::ParameterStore& store);
  long steps() const noexcept { return t_; }

 private:
  AdamOptions options_;
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace siamreid
