#include "siamreid/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "siamreid/error.hpp"
#include "siamreid/rng.hpp"

namespace fs = std::filesystem;

namespace siamreid {
namespace {

enum class Pattern { kStripes, kChecker, kDots, kRings };

struct Identity {
  cv::Vec3b primary;    // BGR
  cv::Vec3b secondary;  // BGR
  Pattern pattern;
  double frequency;  // pattern cycles across the body
  double angle;      // stripe orientation, radians
};

cv::Vec3b hsv_to_bgr(int hue, int sat, int val) {
  cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(hue, sat, val)), bgr;
  cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
  return bgr.at<cv::Vec3b>(0, 0);
}

Identity make_identity(int i, int n) {
  const int hue = (i * 180 / n) % 180;
  return {hsv_to_bgr(hue, 210, 220), hsv_to_bgr((hue + 90) % 180, 160, 90), static_cast<Pattern>(i % 4),
          3.0 + (i / 4) % 3, std::numbers::pi * (i % 5) / 5.0};
}

// 1 where the pattern shows the secondary colour, in body-normalized coordinates u, v in [-1, 1]
bool pattern_on(const Identity& id, double u, double v) {
  const double f = id.frequency;
  switch (id.pattern) {
    case Pattern::kStripes: {
      const double t = u * std::cos(id.angle) + v * std::sin(id.angle);
      return std::sin(std::numbers::pi * f * t) > 0.3;
    }
    case Pattern::kChecker:
      return (static_cast<int>(std::floor((u + 1) * f)) + static_cast<int>(std::floor((v + 1) * f))) % 2 == 0;
    case Pattern::kDots: {
      const double cu = std::fmod((u + 1) * f, 1.0) - 0.5, cv_ = std::fmod((v + 1) * f, 1.0) - 0.5;
      return cu * cu + cv_ * cv_ < 0.09;
    }
    case Pattern::kRings:
      return std::sin(std::numbers::pi * f * std::sqrt(u * u + v * v)) > 0.0;
  }
  return false;
}

struct Ellipse {
  double cx, cy, rx, ry;
};

void paint(cv::Mat& img, const Identity& id, const Ellipse& e, double brightness) {
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      const double u = (x - e.cx) / e.rx, v = (y - e.cy) / e.ry;
      if (u * u + v * v > 1.0) continue;
      const cv::Vec3b& c = pattern_on(id, u, v) ? id.secondary : id.primary;
      auto& px = img.at<cv::Vec3b>(y, x);
      for (int k = 0; k < 3; ++k) px[k] = cv::saturate_cast<uchar>(c[k] * brightness);
    }
  }
}

cv::Mat render(const Identity& id, bool front, int size, Rng& rng) {
  std::uniform_int_distribution<int> level(95, 135);
  std::uniform_int_distribution<int> grain(-6, 6);
  const int gray = level(rng);
  cv::Mat img(size, size, CV_8UC3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const auto g = cv::saturate_cast<uchar>(gray + grain(rng));
      img.at<cv::Vec3b>(y, x) = {g, g, g};
    }
  }
  std::uniform_real_distribution<double> shift(-0.06 * size, 0.06 * size);
  std::uniform_real_distribution<double> bright(0.88, 1.12);
  const double cx = size / 2.0 + shift(rng), cy = size / 2.0 + shift(rng), b = bright(rng);
  if (front) {
    paint(img, id, {cx, cy + 0.12 * size, 0.30 * size, 0.26 * size}, b);
    paint(img, id, {cx, cy - 0.22 * size, 0.17 * size, 0.15 * size}, b);
  } else {
    paint(img, id, {cx, cy, 0.22 * size, 0.36 * size}, b);
  }
  return img;
}

}  // namespace

void generate_synthetic_dataset(const fs::path& out_dir, const SynthOptions& options) {
  if (options.identities < 1 || options.images_per_identity < 1 || options.image_size < 16) {
    throw Error(ErrorCode::kInvalidConfig, "synthetic dataset needs >= 1 identity, >= 1 image, size >= 16");
  }
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    throw Error(ErrorCode::kInvalidConfig, "output directory is not empty: " + out_dir.string());
  }
  const int width = std::max(2, static_cast<int>(std::to_string(options.identities - 1).size()));
  for (int i = 0; i < options.identities; ++i) {
    const Identity id = make_identity(i, options.identities);
    std::string name = std::to_string(i);
    name = "cat_" + std::string(width - name.size(), '0') + name;
    for (int view = 0; view < 2; ++view) {
      const fs::path dir = out_dir / name / (view == 0 ? "front" : "top");
      fs::create_directories(dir);
      for (int k = 0; k < options.images_per_identity; ++k) {
        Rng rng(sub_seed(options.seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(view),
                                        static_cast<std::uint64_t>(k)}));
        char file[16];
        std::snprintf(file, sizeof file, "%04d.png", k);
        if (!cv::imwrite((dir / file).string(), render(id, view == 0, options.image_size, rng))) {
          throw Error(ErrorCode::kIo, "cannot write " + (dir / file).string());
        }
      }
    }
  }
}

}  // namespace siamreid
