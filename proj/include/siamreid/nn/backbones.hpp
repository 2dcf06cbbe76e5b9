#pragma once

#include <vector>

#include "siamreid/nn/layers.hpp"
#include "siamreid/nn/parameters.hpp"

// Backbone graphs. Parameter names follow torchvision's `features.*` state-dict
// keys, prefixed with "backbone.", so converted checkpoints load by name.
namespace siamreid::nn {

/// Four conv(3x3)-ReLU-maxpool blocks; trainable from scratch.
Sequential build_tinyconv(ParameterStore& store, bool trainable);
/// VGG16 convolutional stack (13 conv layers, 5 max pools), classifier removed.
Sequential build_vgg16(ParameterStore& store, bool trainable);
/// MobileNetV3-Large feature extractor through the final 960-channel 1x1 conv.
Sequential build_mobilenet_v3_large(ParameterStore& store, bool trainable);
/// EfficientNet-B0 feature extractor through the final 1280-channel 1x1 conv.
Sequential build_efficientnet_b0(ParameterStore& store, bool trainable);

}  // namespace siamreid::nn
