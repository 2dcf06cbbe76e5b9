#include "siamreid/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "siamreid/error.hpp"
#include "siamreid/rng.hpp"

namespace siamreid {

PixelTensor::PixelTensor(Tensor chw) : tensor_(std::move(chw)) {
  if (tensor_.rank() != 3) {
    throw Error(ErrorCode::kShapeMismatch, "pixel tensor must be CHW, got " + shape_string(tensor_.shape()));
  }
}

bool PixelTensor::is_canonical_shape() const noexcept {
  return channels() == kImageChannels && height() == kImageSize && width() == kImageSize;
}

bool PixelTensor::is_valid() const noexcept {
  if (!is_canonical_shape()) return false;
  return std::all_of(tensor_.values().begin(), tensor_.values().end(),
                     [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

namespace {

// HWC float Mat <-> CHW tensor
cv::Mat to_mat(const PixelTensor& img) {
  cv::Mat m(img.height(), img.width(), CV_32FC(img.channels()));
  for (int y = 0; y < img.height(); ++y) {
    auto* row = m.ptr<float>(y);
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) row[x * img.channels() + c] = img.at(c, y, x);
    }
  }
  return m;
}

PixelTensor from_mat(const cv::Mat& m) {
  PixelTensor img(m.rows, m.cols, m.channels());
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<float>(y);
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < m.channels(); ++c) img.at(c, y, x) = row[x * m.channels() + c];
    }
  }
  return img;
}

}  // namespace

PixelTensor load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorCode::kDecodeFailure, "cannot decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (rgb.rows != kImageSize || rgb.cols != kImageSize) {
    cv::resize(rgb, rgb, cv::Size(kImageSize, kImageSize), 0, 0, cv::INTER_LINEAR);
  }
  cv::Mat f;
  rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
  return from_mat(f);
}

std::string_view to_string(AugmentationKind k) noexcept {
  switch (k) {
    case AugmentationKind::kNone: return "none";
    case AugmentationKind::kFlip: return "flip";
    case AugmentationKind::kRotate: return "rotate";
    case AugmentationKind::kNoise: return "noise";
  }
  return "none";
}

AugmentationKind parse_augmentation(std::string_view s) {
  if (s == "none") return AugmentationKind::kNone;
  if (s == "flip") return AugmentationKind::kFlip;
  if (s == "rotate" || s == "rotation") return AugmentationKind::kRotate;
  if (s == "noise") return AugmentationKind::kNoise;
  throw Error(ErrorCode::kInvalidConfig, "unknown augmentation '" + std::string(s) + "' (none, flip, rotate, noise)");
}

double rotation_angle_for_seed(std::uint64_t seed) {
  Rng rng(seed);
  return std::uniform_real_distribution<double>(-kMaxRotationDegrees, kMaxRotationDegrees)(rng);
}

Tensor noise_field(const std::vector<int>& shape, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> normal(0.0f, static_cast<float>(kNoiseSigma));
  Tensor t(shape);
  for (float& v : t.values()) v = normal(rng);
  return t;
}

PixelTensor augment(const PixelTensor& image, AugmentationKind kind, std::uint64_t seed) {
  switch (kind) {
    case AugmentationKind::kNone: return image;
    case AugmentationKind::kFlip: {
      PixelTensor out = image;
      const int w = image.width();
      for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < image.height(); ++y) {
          for (int x = 0; x < w; ++x) out.at(c, y, x) = image.at(c, y, w - 1 - x);
        }
      }
      return out;
    }
    case AugmentationKind::kRotate: {
      const double angle = rotation_angle_for_seed(seed);
      const cv::Point2f center((image.width() - 1) / 2.0f, (image.height() - 1) / 2.0f);
      const cv::Mat rot = cv::getRotationMatrix2D(center, angle, 1.0);
      cv::Mat rotated;
      cv::warpAffine(to_mat(image), rotated, rot, cv::Size(image.width(), image.height()), cv::INTER_LINEAR,
                     cv::BORDER_CONSTANT, cv::Scalar::all(0));
      PixelTensor out = from_mat(rotated);
      for (float& v : out.tensor().values()) v = std::clamp(v, 0.0f, 1.0f);
      return out;
    }
    case AugmentationKind::kNoise: {
      const Tensor noise = noise_field(image.tensor().shape(), seed);
      PixelTensor out = image;
      for (std::size_t i = 0; i < noise.size(); ++i) {
        out.tensor()[i] = std::clamp(image.tensor()[i] + noise[i], 0.0f, 1.0f);
      }
      return out;
    }
  }
  return image;
}

}  // namespace siamreid
