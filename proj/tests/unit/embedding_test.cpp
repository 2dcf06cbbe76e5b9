#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "../support.hpp"
#include "siamreid/embedding.hpp"
#include "siamreid/error.hpp"
#include "siamreid/rng.hpp"
#include "siamreid/tensor_archive.hpp"

namespace siamreid {
namespace {

using testing::TempDir;

PixelTensor random_image(std::uint64_t seed) {
  PixelTensor img;
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : img.tensor().values()) v = u(rng);
  return img;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

TEST(Distance, UnitVectors) {
  EmbeddingVector a{std::vector<float>(128, 0.0f)}, b = a;
  a.values[0] = 1.0f;
  b.values[1] = 1.0f;
  EXPECT_NEAR(pairwise_distance(a, b), std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(pairwise_distance(a, a), 0.0);
}

TEST(Distance, MetricProperties) {
  Rng rng(3);
  std::normal_distribution<float> n(0.0f, 1.0f);
  auto draw = [&] {
    EmbeddingVector v{std::vector<float>(128)};
    for (auto& x : v.values) x = n(rng);
    return v;
  };
  for (int i = 0; i < 300; ++i) {
    const auto a = draw(), b = draw(), c = draw();
    EXPECT_EQ(pairwise_distance(a, b), pairwise_distance(b, a));
    EXPECT_LE(pairwise_distance(a, c), pairwise_distance(a, b) + pairwise_distance(b, c) + 1e-9);
    EXPECT_GE(pairwise_distance(a, b), 0.0);
  }
}

TEST(Distance, DimensionMismatch) {
  EmbeddingVector a{std::vector<float>(128)}, b{std::vector<float>(64)};
  EXPECT_EQ(code_of([&] { pairwise_distance(a, b); }), ErrorCode::kDimensionMismatch);
}

TEST(BackboneSpec, DefaultsAndValidation) {
  EXPECT_FALSE(BackboneSpec::defaults_for(BackboneName::kTinyConv).pretrained);
  EXPECT_TRUE(BackboneSpec::defaults_for(BackboneName::kVgg16).frozen);
  EXPECT_EQ(code_of([] { BackboneSpec{BackboneName::kTinyConv, true, true}.validate(); }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(code_of([] { BackboneSpec{BackboneName::kVgg16, true, false}.validate(); }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(parse_backbone("mobilenet"), BackboneName::kMobileNetV3Large);
  EXPECT_EQ(parse_backbone("efficientnet_b0"), BackboneName::kEfficientNetB0);
  EXPECT_EQ(parse_backbone("vgg16"), BackboneName::kVgg16);
}

TEST(Network, EmbeddingShapeAndDeterminism) {
  const auto net = build_network(BackboneSpec::defaults_for(BackboneName::kTinyConv), 5);
  const auto img = random_image(1);
  const auto e = net.embed(img);
  EXPECT_EQ(e.size(), 128u);
  EXPECT_EQ(e, net.embed(img));
  const auto again = build_network(BackboneSpec::defaults_for(BackboneName::kTinyConv), 5);
  EXPECT_EQ(again.embed(img), e);
  EXPECT_NE(build_network(BackboneSpec::defaults_for(BackboneName::kTinyConv), 6).embed(img), e);
  EXPECT_EQ(net.feature_shape(), (std::vector<int>{64, 1, 1}));
}

TEST(Network, BatchMatchesSerial) {
  const auto net = build_network(BackboneSpec::defaults_for(BackboneName::kTinyConv), 5);
  std::vector<PixelTensor> images{random_image(1), random_image(2), random_image(3)};
  const auto batch = net.embed_batch(images);
  ASSERT_EQ(batch.size(), 3u);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto single = net.embed(images[i]);
    for (int k = 0; k < 128; ++k) EXPECT_NEAR(batch[i].values[k], single.values[k], 1e-5);
  }
}

TEST(Network, TwinBranchesShareWeights) {
  const auto net = build_network(BackboneSpec::defaults_for(BackboneName::kTinyConv), 1);
  const auto img = random_image(2);
  EXPECT_EQ(pairwise_distance(net.embed(img), net.embed(img)), 0.0);
}

TEST(Network, RejectsWrongInputShape) {
  const auto net = build_network(BackboneSpec::defaults_for(BackboneName::kTinyConv), 1);
  EXPECT_EQ(code_of([&] { net.embed(PixelTensor(100, 150)); }), ErrorCode::kShapeMismatch);
}

TEST(Network, HeadParameterCount) {
  EXPECT_EQ(head_parameter_count({512, 4, 4}), 8192u * 256 + 256 + 256 * 128 + 128);
  const auto net = build_network(BackboneSpec::defaults_for(BackboneName::kTinyConv), 1);
  EXPECT_GT(net.parameters().count(true), head_parameter_count(net.feature_shape()));
}

TEST(Network, PretrainedNeedsWeights) {
  TempDir dir("weights");
  EXPECT_EQ(code_of([&] { build_network(BackboneSpec::defaults_for(BackboneName::kVgg16), 0, dir.path()); }),
            ErrorCode::kWeightsUnavailable);
}

TEST(Network, PretrainedLoadsArchiveAndFreezes) {
  TempDir dir("weights_ok");
  save_archive(random_backbone_archive(BackboneName::kMobileNetV3Large, 9),
               backbone_weights_path(dir.path(), BackboneName::kMobileNetV3Large));
  const auto net = build_network(BackboneSpec::defaults_for(BackboneName::kMobileNetV3Large), 0, dir.path());
  EXPECT_EQ(net.parameters().count(true), head_parameter_count({960, 5, 5}));
  const auto e = net.embed(random_image(4));
  for (float v : e.values) EXPECT_TRUE(std::isfinite(v));
}

TEST(Network, BackwardMatchesFiniteDifferences) {
  auto net = build_network(BackboneSpec::defaults_for(BackboneName::kTinyConv), 2);
  const auto img = random_image(8);
  Rng rng(4);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> r(128);
  for (auto& v : r) v = u(rng);
  auto objective = [&] {
    const auto e = net.embed(img);
    double s = 0;
    for (int i = 0; i < 128; ++i) s += double(e.values[i]) * r[i];
    return s;
  };
  EmbeddingNetwork::Trace trace;
  net.forward_image(img, trace);
  net.parameters().zero_grad();
  net.backward(trace, r);

  const float h = 1e-3f;
  int checked = 0;
  for (std::size_t p = 0; p < net.parameters().size(); ++p) {
    auto& param = net.parameters()[p];
    for (int k = 0; k < 4; ++k) {
      const std::size_t i = (rng() % param.value.size());
      const float saved = param.value[i];
      param.value[i] = saved + h;
      const double up = objective();
      param.value[i] = saved - h;
      const double down = objective();
      param.value[i] = saved;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(param.grad[i], fd, 3e-2 * std::max(1.0, std::abs(fd))) << param.name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GE(checked, 40);
}

TEST(Checkpoint, RoundTripScratch) {
  TempDir dir("ckpt");
  auto net = build_network(BackboneSpec::defaults_for(BackboneName::kTinyConv), 3);
  net.parameters()[0].value[0] += 0.25f;
  save_checkpoint(net, dir / "c", "abc");
  const auto loaded = load_checkpoint(dir / "c");
  const auto img = random_image(5);
  EXPECT_EQ(loaded.embed(img), net.embed(img));
  EXPECT_EQ(read_checkpoint_metadata(dir / "c").config_hash, "abc");
}

TEST(Checkpoint, PretrainedChecksumVerified) {
  TempDir dir("ckpt_pre");
  const auto weights = backbone_weights_path(dir / "cache", BackboneName::kVgg16);
  save_archive(random_backbone_archive(BackboneName::kVgg16, 1), weights);
  const auto net = build_network(BackboneSpec::defaults_for(BackboneName::kVgg16), 0, dir / "cache");
  save_checkpoint(net, dir / "c", "h");
  EXPECT_LT(std::filesystem::file_size(dir / "c" / "weights.srta"), 9'000'000u);  // head only
  EXPECT_EQ(load_checkpoint(dir / "c", dir / "cache").head_checksum(), net.head_checksum());
  save_archive(random_backbone_archive(BackboneName::kVgg16, 2), weights);
  EXPECT_EQ(code_of([&] { load_checkpoint(dir / "c", dir / "cache"); }), ErrorCode::kWeightsUnavailable);
}

TEST(Archive, RoundTrip) {
  TempDir dir("srta");
  TensorArchive a;
  a["x"] = Tensor({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  a["y.z"] = Tensor({1}, std::vector<float>{-0.5f});
  save_archive(a, dir / "a.srta");
  EXPECT_EQ(load_archive(dir / "a.srta"), a);
}

}  // namespace
}  // namespace siamreid
