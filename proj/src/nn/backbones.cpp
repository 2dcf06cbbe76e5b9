#include "siamreid/nn/backbones.hpp"

#include <algorithm>
#include <optional>
#include <string>

namespace siamreid::nn {
namespace {

constexpr std::array<float, 3> kImagenetMean{0.485f, 0.456f, 0.406f};
constexpr std::array<float, 3> kImagenetStd{0.229f, 0.224f, 0.225f};

class Builder {
 public:
  Builder(ParameterStore& store, bool trainable) : store_(store), trainable_(trainable) {}

  Parameter* param(const std::string& name, std::vector<int> shape) {
    return &store_.add("backbone." + name, Tensor(std::move(shape)), trainable_);
  }

  LayerPtr conv(const std::string& prefix, int in, int out, int kernel, int stride, int groups, bool bias) {
    ConvGeometry g{in, out, kernel, stride, (kernel - 1) / 2, groups};
    Parameter* w = param(prefix + ".weight", {out, groups == 1 ? in : 1, kernel, kernel});
    Parameter* b = bias ? param(prefix + ".bias", {out}) : nullptr;
    return std::make_unique<Conv2d>(g, w, b);
  }

  // torchvision Conv2dNormActivation: <prefix>.0 conv, <prefix>.1 batch norm, then activation
  void conv_bn_act(Sequential& seq, const std::string& prefix, int in, int out, int kernel, int stride, int groups,
                   float eps, std::optional<ActivationKind> act) {
    seq.add(conv(prefix + ".0", in, out, kernel, stride, groups, false));
    const std::string bn = prefix + ".1";
    seq.add(std::make_unique<BatchNorm2d>(param(bn + ".weight", {out}), param(bn + ".bias", {out}),
                                          param(bn + ".running_mean", {out}), param(bn + ".running_var", {out}), eps));
    if (act) seq.add(std::make_unique<Activation>(*act));
  }

  LayerPtr squeeze_excitation(const std::string& prefix, int channels, int squeeze, ActivationKind inner,
                              ActivationKind gate) {
    return std::make_unique<SqueezeExcitation>(
        param(prefix + ".fc1.weight", {squeeze, channels, 1, 1}), param(prefix + ".fc1.bias", {squeeze}),
        param(prefix + ".fc2.weight", {channels, squeeze, 1, 1}), param(prefix + ".fc2.bias", {channels}), inner, gate);
  }

 private:
  ParameterStore& store_;
  bool trainable_;
};

int make_divisible(double v, int divisor = 8) {
  int new_v = std::max(divisor, static_cast<int>(v + divisor / 2.0) / divisor * divisor);
  if (new_v < 0.9 * v) new_v += divisor;
  return new_v;
}

void add_block(Sequential& seq, Sequential body, bool residual) {
  if (residual) {
    seq.add(std::make_unique<Residual>(std::move(body)));
  } else {
    seq.add(std::make_unique<Sequential>(std::move(body)));
  }
}

}  // namespace

Sequential build_tinyconv(ParameterStore& store, bool trainable) {
  Builder b(store, trainable);
  Sequential seq;
  seq.add(std::make_unique<Normalize>(std::array<float, 3>{0.5f, 0.5f, 0.5f},
                                      std::array<float, 3>{0.25f, 0.25f, 0.25f}));
  struct Block {
    int in, out, stride;
  };
  constexpr Block blocks[] = {{3, 16, 2}, {16, 32, 1}, {32, 32, 1}, {32, 64, 1}};
  int i = 0;
  for (const auto& blk : blocks) {
    seq.add(b.conv("conv" + std::to_string(++i), blk.in, blk.out, 3, blk.stride, 1, true));
    seq.add(std::make_unique<Activation>(ActivationKind::kRelu));
    seq.add(std::make_unique<MaxPool2d>(2, 2));
  }
  seq.add(std::make_unique<GlobalAvgPool2d>());
  return seq;
}

Sequential build_vgg16(ParameterStore& store, bool trainable) {
  Builder b(store, trainable);
  Sequential seq;
  seq.add(std::make_unique<Normalize>(kImagenetMean, kImagenetStd));
  constexpr int kPool = 0;
  constexpr int cfg[] = {64, 64, kPool, 128, 128, kPool, 256, 256, 256, kPool, 512, 512, 512, kPool, 512, 512, 512, kPool};
  int index = 0, channels = 3;
  for (int v : cfg) {
    if (v == kPool) {
      seq.add(std::make_unique<MaxPool2d>(2, 2));
      index += 1;
    } else {
      seq.add(b.conv("features." + std::to_string(index), channels, v, 3, 1, 1, true));
      seq.add(std::make_unique<Activation>(ActivationKind::kRelu));
      channels = v;
      index += 2;
    }
  }
  return seq;
}

Sequential build_mobilenet_v3_large(ParameterStore& store, bool trainable) {
  Builder b(store, trainable);
  constexpr float kEps = 1e-3f;
  constexpr auto kRe = ActivationKind::kRelu;
  constexpr auto kHs = ActivationKind::kHardSwish;
  struct Row {
    int in, kernel, expanded, out;
    bool se;
    ActivationKind act;
    int stride;
  };
  constexpr Row rows[] = {
      {16, 3, 16, 16, false, kRe, 1},    {16, 3, 64, 24, false, kRe, 2},    {24, 3, 72, 24, false, kRe, 1},
      {24, 5, 72, 40, true, kRe, 2},     {40, 5, 120, 40, true, kRe, 1},    {40, 5, 120, 40, true, kRe, 1},
      {40, 3, 240, 80, false, kHs, 2},   {80, 3, 200, 80, false, kHs, 1},   {80, 3, 184, 80, false, kHs, 1},
      {80, 3, 184, 80, false, kHs, 1},   {80, 3, 480, 112, true, kHs, 1},   {112, 3, 672, 112, true, kHs, 1},
      {112, 5, 672, 160, true, kHs, 2},  {160, 5, 960, 160, true, kHs, 1},  {160, 5, 960, 160, true, kHs, 1},
  };

  Sequential seq;
  seq.add(std::make_unique<Normalize>(kImagenetMean, kImagenetStd));
  b.conv_bn_act(seq, "features.0", 3, 16, 3, 2, 1, kEps, kHs);
  int feature = 1;
  for (const auto& r : rows) {
    const std::string prefix = "features." + std::to_string(feature++) + ".block.";
    Sequential body;
    int j = 0;
    if (r.expanded != r.in) b.conv_bn_act(body, prefix + std::to_string(j++), r.in, r.expanded, 1, 1, 1, kEps, r.act);
    b.conv_bn_act(body, prefix + std::to_string(j++), r.expanded, r.expanded, r.kernel, r.stride, r.expanded, kEps,
                  r.act);
    if (r.se) {
      body.add(b.squeeze_excitation(prefix + std::to_string(j++), r.expanded, make_divisible(r.expanded / 4),
                                    ActivationKind::kRelu, ActivationKind::kHardSigmoid));
    }
    b.conv_bn_act(body, prefix + std::to_string(j++), r.expanded, r.out, 1, 1, 1, kEps, std::nullopt);
    add_block(seq, std::move(body), r.stride == 1 && r.in == r.out);
  }
  b.conv_bn_act(seq, "features.16", 160, 960, 1, 1, 1, kEps, kHs);
  return seq;
}

Sequential build_efficientnet_b0(ParameterStore& store, bool trainable) {
  Builder b(store, trainable);
  constexpr float kEps = 1e-5f;
  constexpr auto kSilu = ActivationKind::kSilu;
  struct Stage {
    int expand, kernel, stride, in, out, layers;
  };
  constexpr Stage stages[] = {{1, 3, 1, 32, 16, 1},  {6, 3, 2, 16, 24, 2},  {6, 5, 2, 24, 40, 2},
                              {6, 3, 2, 40, 80, 3},  {6, 5, 1, 80, 112, 3}, {6, 5, 2, 112, 192, 4},
                              {6, 3, 1, 192, 320, 1}};

  Sequential seq;
  seq.add(std::make_unique<Normalize>(kImagenetMean, kImagenetStd));
  b.conv_bn_act(seq, "features.0", 3, 32, 3, 2, 1, kEps, kSilu);
  int feature = 1;
  for (const auto& s : stages) {
    for (int l = 0; l < s.layers; ++l) {
      const int in = l == 0 ? s.in : s.out;
      const int stride = l == 0 ? s.stride : 1;
      const int expanded = in * s.expand;
      const std::string prefix = "features." + std::to_string(feature) + "." + std::to_string(l) + ".block.";
      Sequential body;
      int j = 0;
      if (expanded != in) b.conv_bn_act(body, prefix + std::to_string(j++), in, expanded, 1, 1, 1, kEps, kSilu);
      b.conv_bn_act(body, prefix + std::to_string(j++), expanded, expanded, s.kernel, stride, expanded, kEps, kSilu);
      body.add(b.squeeze_excitation(prefix + std::to_string(j++), expanded, std::max(1, in / 4), kSilu,
                                    ActivationKind::kSigmoid));
      b.conv_bn_act(body, prefix + std::to_string(j++), expanded, s.out, 1, 1, 1, kEps, std::nullopt);
      add_block(seq, std::move(body), stride == 1 && in == s.out);
    }
    ++feature;
  }
  b.conv_bn_act(seq, "features.8", 320, 1280, 1, 1, 1, kEps, kSilu);
  return seq;
}

}  // namespace siamreid::nn
