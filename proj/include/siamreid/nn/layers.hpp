#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "siamreid/nn/parameters.hpp"
#include "siamreid/tensor.hpp"

namespace siamreid::nn {

/// Whatever a layer needs to run its backward pass for one forward call.
struct LayerContext {
  std::vector<Tensor> saved;
  std::vector<int> indices;
  std::vector<int> shape;
  std::vector<LayerContext> children;
};

/// Layers operate on a single sample (CHW or flat). Parameters live in a
/// ParameterStore; a layer only references them, so one store backs every
/// branch of a weight-sharing network. Backward accumulates into Parameter::grad.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::vector<int> output_shape(const std::vector<int>& input) const = 0;
  /// `ctx` is null at inference; otherwise it receives what backward needs.
  virtual Tensor forward(const Tensor& x, LayerContext* ctx) const = 0;
  /// Returns dL/dx. Forward-only layers throw.
  virtual Tensor backward(const LayerContext& ctx, const Tensor& dy) const;
  virtual bool differentiable() const noexcept { return false; }
};

using LayerPtr = std::unique_ptr<Layer>;

class Sequential final : public Layer {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerPtr> layers) : layers_(std::move(layers)) {}

  Sequential& add(LayerPtr layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  std::size_t size() const noexcept { return layers_.size(); }

  std::vector<int> output_shape(const std::vector<int>& input) const override;
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;
  Tensor backward(const LayerContext& ctx, const Tensor& dy) const override;
  bool differentiable() const noexcept override;

 private:
  std::vector<LayerPtr> layers_;
};

struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  int groups = 1;  // 1 or in_channels (depthwise)
};

/// 2-D convolution, weight [out, in/groups, k, k], optional bias [out].
class Conv2d final : public Layer {
 public:
  Conv2d(ConvGeometry g, Parameter* weight, Parameter* bias);

  std::vector<int> output_shape(const std::vector<int>& input) const override;
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;
  Tensor backward(const LayerContext& ctx, const Tensor& dy) const override;
  bool differentiable() const noexcept override { return geometry_.groups == 1; }

 private:
  Tensor forward_dense(const Tensor& x) const;
  Tensor forward_depthwise(const Tensor& x) const;

  ConvGeometry geometry_;
  Parameter* weight_;
  Parameter* bias_;
};

/// Inference-mode batch normalization with running statistics.
class BatchNorm2d final : public Layer {
 public:
  BatchNorm2d(Parameter* weight, Parameter* bias, Parameter* mean, Parameter* var, float eps);
  std::vector<int> output_shape(const std::vector<int>& input) const override { return input; }
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;

 private:
  Parameter* weight_;
  Parameter* bias_;
  Parameter* mean_;
  Parameter* var_;
  float eps_;
};

enum class ActivationKind { kRelu, kHardSwish, kHardSigmoid, kSilu, kSigmoid };

class Activation final : public Layer {
 public:
  explicit Activation(ActivationKind kind) : kind_(kind) {}
  std::vector<int> output_shape(const std::vector<int>& input) const override { return input; }
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;
  Tensor backward(const LayerContext& ctx, const Tensor& dy) const override;
  bool differentiable() const noexcept override { return kind_ == ActivationKind::kRelu; }

  static float apply(ActivationKind kind, float v) noexcept;

 private:
  ActivationKind kind_;
};

/// Max pooling with square window, no padding, floor output size.
class MaxPool2d final : public Layer {
 public:
  MaxPool2d(int kernel, int stride) : kernel_(kernel), stride_(stride) {}
  std::vector<int> output_shape(const std::vector<int>& input) const override;
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;
  Tensor backward(const LayerContext& ctx, const Tensor& dy) const override;
  bool differentiable() const noexcept override { return true; }

 private:
  int kernel_;
  int stride_;
};

/// Mean over each channel plane: [C, H, W] -> [C, 1, 1].
class GlobalAvgPool2d final : public Layer {
 public:
  std::vector<int> output_shape(const std::vector<int>& input) const override;
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;
  Tensor backward(const LayerContext& ctx, const Tensor& dy) const override;
  bool differentiable() const noexcept override { return true; }
};

/// Channel gating: x * gate(fc2(act(fc1(mean_hw(x))))).
class SqueezeExcitation final : public Layer {
 public:
  SqueezeExcitation(Parameter* fc1_w, Parameter* fc1_b, Parameter* fc2_w, Parameter* fc2_b,
                    ActivationKind inner, ActivationKind gate);
  std::vector<int> output_shape(const std::vector<int>& input) const override { return input; }
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;

 private:
  Parameter* fc1_w_;
  Parameter* fc1_b_;
  Parameter* fc2_w_;
  Parameter* fc2_b_;
  ActivationKind inner_;
  ActivationKind gate_;
};

/// y = x + body(x)
class Residual final : public Layer {
 public:
  explicit Residual(Sequential body) : body_(std::move(body)) {}
  std::vector<int> output_shape(const std::vector<int>& input) const override {
    return body_.output_shape(input);
  }
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;

 private:
  Sequential body_;
};

/// Per-channel (x - mean) / std on the network input.
class Normalize final : public Layer {
 public:
  Normalize(std::array<float, 3> mean, std::array<float, 3> stddev) : mean_(mean), std_(stddev) {}
  std::vector<int> output_shape(const std::vector<int>& input) const override { return input; }
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;
  Tensor backward(const LayerContext& ctx, const Tensor& dy) const override;
  bool differentiable() const noexcept override { return true; }

 private:
  std::array<float, 3> mean_;
  std::array<float, 3> std_;
};

class Flatten final : public Layer {
 public:
  std::vector<int> output_shape(const std::vector<int>& input) const override;
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;
  Tensor backward(const LayerContext& ctx, const Tensor& dy) const override;
  bool differentiable() const noexcept override { return true; }
};

/// y = W x + b with W [out, in].
class Dense final : public Layer {
 public:
  Dense(Parameter* weight, Parameter* bias);
  std::vector<int> output_shape(const std::vector<int>& input) const override;
  Tensor forward(const Tensor& x, LayerContext* ctx) const override;
  Tensor backward(const LayerContext& ctx, const Tensor& dy) const override;
  bool differentiable() const noexcept override { return true; }

 private:
  Parameter* weight_;
  Parameter* bias_;
};

}  // namespace siamreid::nn
