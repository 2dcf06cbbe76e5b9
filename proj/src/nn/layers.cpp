#include "siamreid/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "siamreid/error.hpp"

namespace siamreid::nn {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXf>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXf>;

void expect_rank(const Tensor& x, std::size_t rank, const char* layer) {
  if (x.rank() != rank) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(layer) + " expects rank " + std::to_string(rank) + ", got " + shape_string(x.shape()));
  }
}

int conv_out(int in, int kernel, int stride, int padding) { return (in + 2 * padding - kernel) / stride + 1; }

// col is [C*k*k, Ho*Wo]
void im2col(const Tensor& x, const ConvGeometry& g, int ho, int wo, AlignedVector<float>& col) {
  const int h = x.dim(1), w = x.dim(2), k = g.kernel;
  col.assign(static_cast<std::size_t>(g.in_channels) * k * k * ho * wo, 0.0f);
  std::size_t row = 0;
  for (int c = 0; c < g.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        float* dst = col.data() + row * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= h) continue;
          const float* src = x.data() + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < w) dst[oy * wo + ox] = src[ix];
          }
        }
      }
    }
  }
}

void col2im(const AlignedVector<float>& col, const ConvGeometry& g, int ho, int wo, Tensor& dx) {
  const int h = dx.dim(1), w = dx.dim(2), k = g.kernel;
  std::size_t row = 0;
  for (int c = 0; c < g.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        const float* src = col.data() + row * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= h) continue;
          float* dst = dx.data() + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.padding == 0; }

}  // namespace

Tensor Layer::backward(const LayerContext&, const Tensor&) const {
  throw Error(ErrorCode::kInvalidConfig, "layer is inference-only and cannot be trained");
}

// ---- Sequential ----

std::vector<int> Sequential::output_shape(const std::vector<int>& input) const {
  std::vector<int> s = input;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

Tensor Sequential::forward(const Tensor& x, LayerContext* ctx) const {
  if (ctx) ctx->children.assign(layers_.size(), {});
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->forward(cur, ctx ? &ctx->children[i] : nullptr);
  }
  return cur;
}

Tensor Sequential::backward(const LayerContext& ctx, const Tensor& dy) const {
  Tensor grad = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) grad = layers_[i]->backward(ctx.children.at(i), grad);
  return grad;
}

bool Sequential::differentiable() const noexcept {
  return std::all_of(layers_.begin(), layers_.end(), [](const LayerPtr& l) { return l->differentiable(); });
}

// ---- Conv2d ----

Conv2d::Conv2d(ConvGeometry g, Parameter* weight, Parameter* bias) : geometry_(g), weight_(weight), bias_(bias) {
  const int per_group = g.groups == 1 ? g.in_channels : 1;
  if (g.groups != 1 && g.groups != g.in_channels) {
    throw Error(ErrorCode::kInvalidConfig, "only dense or depthwise convolutions are supported");
  }
  const std::vector<int> expected{g.out_channels, per_group, g.kernel, g.kernel};
  if (weight_->value.shape() != expected) {
    throw Error(ErrorCode::kShapeMismatch, "conv weight " + weight_->name + " is " +
                                               shape_string(weight_->value.shape()) + ", expected " +
                                               shape_string(expected));
  }
}

std::vector<int> Conv2d::output_shape(const std::vector<int>& in) const {
  return {geometry_.out_channels, conv_out(in.at(1), geometry_.kernel, geometry_.stride, geometry_.padding),
          conv_out(in.at(2), geometry_.kernel, geometry_.stride, geometry_.padding)};
}

Tensor Conv2d::forward(const Tensor& x, LayerContext* ctx) const {
  expect_rank(x, 3, "conv2d");
  if (x.dim(0) != geometry_.in_channels) {
    throw Error(ErrorCode::kShapeMismatch, "conv2d " + weight_->name + " expects " +
                                               std::to_string(geometry_.in_channels) + " channels, got " +
                                               shape_string(x.shape()));
  }
  if (ctx) ctx->saved = {x};
  return geometry_.groups == 1 ? forward_dense(x) : forward_depthwise(x);
}

Tensor Conv2d::forward_dense(const Tensor& x) const {
  const auto out_shape = output_shape(x.shape());
  const int ho = out_shape[1], wo = out_shape[2];
  const int k_dim = geometry_.in_channels * geometry_.kernel * geometry_.kernel;
  Tensor y(out_shape);
  MatMap y_mat(y.data(), geometry_.out_channels, ho * wo);
  ConstMatMap w_mat(weight_->value.data(), geometry_.out_channels, k_dim);
  if (is_pointwise(geometry_)) {
    y_mat.noalias() = w_mat * ConstMatMap(x.data(), k_dim, ho * wo);
  } else {
    thread_local AlignedVector<float> col;
    im2col(x, geometry_, ho, wo, col);
    y_mat.noalias() = w_mat * ConstMatMap(col.data(), k_dim, ho * wo);
  }
  if (bias_) y_mat.colwise() += ConstVecMap(bias_->value.data(), geometry_.out_channels);
  return y;
}

Tensor Conv2d::forward_depthwise(const Tensor& x) const {
  const auto out_shape = output_shape(x.shape());
  const int h = x.dim(1), w = x.dim(2), ho = out_shape[1], wo = out_shape[2], k = geometry_.kernel;
  Tensor y(out_shape);
  for (int c = 0; c < geometry_.out_channels; ++c) {
    const float* wk = weight_->value.data() + static_cast<std::size_t>(c) * k * k;
    const float b = bias_ ? bias_->value[c] : 0.0f;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        float acc = b;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * geometry_.stride - geometry_.padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * geometry_.stride - geometry_.padding + kx;
            if (ix >= 0 && ix < w) acc += wk[ky * k + kx] * x.at(c, iy, ix);
          }
        }
        y.at(c, oy, ox) = acc;
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const LayerContext& ctx, const Tensor& dy) const {
  if (geometry_.groups != 1) return Layer::backward(ctx, dy);
  const Tensor& x = ctx.saved.at(0);
  const int ho = dy.dim(1), wo = dy.dim(2);
  const int k_dim = geometry_.in_channels * geometry_.kernel * geometry_.kernel;
  ConstMatMap dy_mat(dy.data(), geometry_.out_channels, ho * wo);
  ConstMatMap w_mat(weight_->value.data(), geometry_.out_channels, k_dim);

  AlignedVector<float> col;
  im2col(x, geometry_, ho, wo, col);
  ConstMatMap col_mat(col.data(), k_dim, ho * wo);
  if (weight_->trainable) {
    MatMap(weight_->grad.data(), geometry_.out_channels, k_dim).noalias() += dy_mat * col_mat.transpose();
  }
  if (bias_ && bias_->trainable) {
    VecMap(bias_->grad.data(), geometry_.out_channels) += dy_mat.rowwise().sum();
  }
  AlignedVector<float> dcol(col.size());
  MatMap(dcol.data(), k_dim, ho * wo).noalias() = w_mat.transpose() * dy_mat;
  Tensor dx(x.shape());
  col2im(dcol, geometry_, ho, wo, dx);
  return dx;
}

// ---- BatchNorm2d ----

BatchNorm2d::BatchNorm2d(Parameter* weight, Parameter* bias, Parameter* mean, Parameter* var, float eps)
    : weight_(weight), bias_(bias), mean_(mean), var_(var), eps_(eps) {}

Tensor BatchNorm2d::forward(const Tensor& x, LayerContext*) const {
  expect_rank(x, 3, "batchnorm");
  Tensor y(x.shape());
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  for (int c = 0; c < x.dim(0); ++c) {
    const float scale = weight_->value[c] / std::sqrt(var_->value[c] + eps_);
    const float shift = bias_->value[c] - mean_->value[c] * scale;
    const float* src = x.data() + c * plane;
    float* dst = y.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
  }
  return y;
}

// ---- Activation ----

float Activation::apply(ActivationKind kind, float v) noexcept {
  switch (kind) {
    case ActivationKind::kRelu: return v > 0.0f ? v : 0.0f;
    case ActivationKind::kHardSwish: return v * std::clamp(v + 3.0f, 0.0f, 6.0f) / 6.0f;
    case ActivationKind::kHardSigmoid: return std::clamp(v + 3.0f, 0.0f, 6.0f) / 6.0f;
    case ActivationKind::kSilu: return v / (1.0f + std::exp(-v));
    case ActivationKind::kSigmoid: return 1.0f / (1.0f + std::exp(-v));
  }
  return v;
}

Tensor Activation::forward(const Tensor& x, LayerContext* ctx) const {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply(kind_, x[i]);
  if (ctx) ctx->saved = {y};
  return y;
}

Tensor Activation::backward(const LayerContext& ctx, const Tensor& dy) const {
  if (kind_ != ActivationKind::kRelu) return Layer::backward(ctx, dy);
  const Tensor& y = ctx.saved.at(0);
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
  return dx;
}

// ---- MaxPool2d ----

std::vector<int> MaxPool2d::output_shape(const std::vector<int>& in) const {
  return {in.at(0), (in.at(1) - kernel_) / stride_ + 1, (in.at(2) - kernel_) / stride_ + 1};
}

Tensor MaxPool2d::forward(const Tensor& x, LayerContext* ctx) const {
  expect_rank(x, 3, "maxpool");
  const auto out_shape = output_shape(x.shape());
  const int h = x.dim(1), w = x.dim(2), ho = out_shape[1], wo = out_shape[2];
  Tensor y(out_shape);
  if (ctx) {
    ctx->indices.resize(y.size());
    ctx->shape = x.shape();
  }
  std::size_t o = 0;
  for (int c = 0; c < x.dim(0); ++c) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++o) {
        float best = -std::numeric_limits<float>::infinity();
        int best_idx = 0;
        for (int ky = 0; ky < kernel_; ++ky) {
          for (int kx = 0; kx < kernel_; ++kx) {
            const int idx = (c * h + oy * stride_ + ky) * w + ox * stride_ + kx;
            if (x[idx] > best) {
              best = x[idx];
              best_idx = idx;
            }
          }
        }
        y[o] = best;
        if (ctx) ctx->indices[o] = best_idx;
      }
    }
  }
  return y;
}

Tensor MaxPool2d::backward(const LayerContext& ctx, const Tensor& dy) const {
  Tensor dx(ctx.shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[ctx.indices[o]] += dy[o];
  return dx;
}

// ---- GlobalAvgPool2d ----

std::vector<int> GlobalAvgPool2d::output_shape(const std::vector<int>& in) const { return {in.at(0), 1, 1}; }

Tensor GlobalAvgPool2d::forward(const Tensor& x, LayerContext* ctx) const {
  expect_rank(x, 3, "global average pool");
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  Tensor y({x.dim(0), 1, 1});
  for (int c = 0; c < x.dim(0); ++c) y[c] = ConstVecMap(x.data() + c * plane, plane).mean();
  if (ctx) ctx->shape = x.shape();
  return y;
}

Tensor GlobalAvgPool2d::backward(const LayerContext& ctx, const Tensor& dy) const {
  Tensor dx(ctx.shape);
  const std::size_t plane = static_cast<std::size_t>(ctx.shape.at(1)) * ctx.shape.at(2);
  for (int c = 0; c < ctx.shape.at(0); ++c) {
    VecMap(dx.data() + c * plane, plane).setConstant(dy[c] / static_cast<float>(plane));
  }
  return dx;
}

// ---- SqueezeExcitation ----

SqueezeExcitation::SqueezeExcitation(Parameter* fc1_w, Parameter* fc1_b, Parameter* fc2_w, Parameter* fc2_b,
                                     ActivationKind inner, ActivationKind gate)
    : fc1_w_(fc1_w), fc1_b_(fc1_b), fc2_w_(fc2_w), fc2_b_(fc2_b), inner_(inner), gate_(gate) {}

Tensor SqueezeExcitation::forward(const Tensor& x, LayerContext*) const {
  expect_rank(x, 3, "squeeze-excitation");
  const int c = x.dim(0);
  const int squeeze = fc1_w_->value.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  Eigen::VectorXf pooled(c);
  for (int i = 0; i < c; ++i) pooled[i] = ConstVecMap(x.data() + i * plane, plane).mean();
  Eigen::VectorXf hidden = ConstMatMap(fc1_w_->value.data(), squeeze, c) * pooled +
                           ConstVecMap(fc1_b_->value.data(), squeeze);
  for (auto& v : hidden) v = Activation::apply(inner_, v);
  Eigen::VectorXf scale = ConstMatMap(fc2_w_->value.data(), c, squeeze) * hidden + ConstVecMap(fc2_b_->value.data(), c);
  Tensor y(x.shape());
  for (int i = 0; i < c; ++i) {
    const float g = Activation::apply(gate_, scale[i]);
    VecMap(y.data() + i * plane, plane) = ConstVecMap(x.data() + i * plane, plane) * g;
  }
  return y;
}

// ---- Residual ----

Tensor Residual::forward(const Tensor& x, LayerContext*) const {
  Tensor y = body_.forward(x, nullptr);
  if (y.shape() != x.shape()) throw Error(ErrorCode::kShapeMismatch, "residual branch changed shape");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
  return y;
}

// ---- Normalize ----

Tensor Normalize::forward(const Tensor& x, LayerContext*) const {
  expect_rank(x, 3, "normalize");
  if (x.dim(0) != 3) throw Error(ErrorCode::kShapeMismatch, "normalize expects 3 channels");
  Tensor y(x.shape());
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) y[c * plane + i] = (x[c * plane + i] - mean_[c]) / std_[c];
  }
  return y;
}

Tensor Normalize::backward(const LayerContext&, const Tensor& dy) const {
  Tensor dx(dy.shape());
  const std::size_t plane = static_cast<std::size_t>(dy.dim(1)) * dy.dim(2);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) dx[c * plane + i] = dy[c * plane + i] / std_[c];
  }
  return dx;
}

// ---- Flatten ----

std::vector<int> Flatten::output_shape(const std::vector<int>& in) const {
  return {static_cast<int>(shape_numel(in))};
}

Tensor Flatten::forward(const Tensor& x, LayerContext* ctx) const {
  if (ctx) ctx->shape = x.shape();
  return x.reshaped({static_cast<int>(x.size())});
}

Tensor Flatten::backward(const LayerContext& ctx, const Tensor& dy) const { return dy.reshaped(ctx.shape); }

// ---- Dense ----

Dense::Dense(Parameter* weight, Parameter* bias) : weight_(weight), bias_(bias) {
  if (weight_->value.rank() != 2 || bias_->value.rank() != 1 || bias_->value.dim(0) != weight_->value.dim(0)) {
    throw Error(ErrorCode::kShapeMismatch, "dense parameters " + weight_->name + " are inconsistent");
  }
}

std::vector<int> Dense::output_shape(const std::vector<int>& in) const {
  if (in.size() != 1 || in[0] != weight_->value.dim(1)) {
    throw Error(ErrorCode::kShapeMismatch, "dense " + weight_->name + " expects " +
                                               std::to_string(weight_->value.dim(1)) + " inputs, got " +
                                               shape_string(in));
  }
  return {weight_->value.dim(0)};
}

Tensor Dense::forward(const Tensor& x, LayerContext* ctx) const {
  const int out = weight_->value.dim(0), in = weight_->value.dim(1);
  if (x.size() != static_cast<std::size_t>(in)) {
    throw Error(ErrorCode::kShapeMismatch,
                "dense " + weight_->name + " expects " + std::to_string(in) + " inputs, got " + shape_string(x.shape()));
  }
  if (ctx) ctx->saved = {x};
  Tensor y({out});
  VecMap(y.data(), out).noalias() =
      ConstMatMap(weight_->value.data(), out, in) * ConstVecMap(x.data(), in) + ConstVecMap(bias_->value.data(), out);
  return y;
}

Tensor Dense::backward(const LayerContext& ctx, const Tensor& dy) const {
  const int out = weight_->value.dim(0), in = weight_->value.dim(1);
  const Tensor& x = ctx.saved.at(0);
  ConstVecMap dy_vec(dy.data(), out);
  if (weight_->trainable) {
    MatMap(weight_->grad.data(), out, in).noalias() += dy_vec * ConstVecMap(x.data(), in).transpose();
  }
  if (bias_->trainable) VecMap(bias_->grad.data(), out) += dy_vec;
  Tensor dx(x.shape());
  VecMap(dx.data(), in).noalias() = ConstMatMap(weight_->value.data(), out, in).transpose() * dy_vec;
  return dx;
}

}  // namespace siamreid::nn
