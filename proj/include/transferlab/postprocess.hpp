#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "transferlab/error.hpp"
#include "transferlab/preprocess.hpp"

namespace tl {

/// Ordered L-infinity clip radii in pixel units.
class ClipSchedule {
 public:
  /// Throws std::invalid_argument unless radii are non-negative, strictly
  /// increasing and non-empty.
  explicit ClipSchedule(std::vector<int> radii);
  /// 0, 5, 10, ..., 150.
  static ClipSchedule standard();

  const std::vector<int>& radii() const { return radii_; }
  std::size_t size() const { return radii_.size(); }
  int operator[](std::size_t i) const { return radii_[i]; }
  std::size_t index_of(int radius) const;

  friend bool operator==(const ClipSchedule&, const ClipSchedule&) = default;

 private:
  std::vector<int> radii_;
};

/// Reverse-preprocesses an adversarial ([H,W,3] or [1,H,W,3]) and clamps it
/// to [0, 255].
FloatImage to_pixel_domain(const Tensor& adversarial, Family family);

/// orig + clamp(adv - orig, -r, r), the exact projection onto the L-infinity
/// ball of radius r around orig.
template <typename Scalar>
Image<Scalar> linf_clip(const Image<Scalar>& adversarial, const PixelImage& orig, Scalar r) {
  if (!(r >= Scalar(0))) throw std::invalid_argument("linf_clip: radius must be >= 0");
  if (adversarial.height != orig.height || adversarial.width != orig.width || adversarial.channels != orig.channels) {
    throw ShapeError("linf_clip: shapes " + image_shape_string(adversarial) + " and " + image_shape_string(orig) +
                     " differ");
  }
  Image<Scalar> out = adversarial;
  for (Index i = 0; i < out.size(); ++i) {
    const auto o = static_cast<Scalar>(orig.data[i]);
    out.data[i] = o + std::clamp(adversarial.data[i] - o, -r, r);
  }
  return out;
}

/// Round half away from zero; values are clamped to [0, 255] first.
template <typename Scalar>
PixelImage round_to_pixels(const Image<Scalar>& img) {
  PixelImage out(img.height, img.width, img.channels);
  for (Index i = 0; i < img.size(); ++i) {
    const double v = std::round(std::clamp(static_cast<double>(img.data[i]), 0.0, 255.0));
    out.data[i] = static_cast<std::uint8_t>(v);
  }
  return out;
}

/// to_pixel_domain, then linf_clip and round_to_pixels for every radius.
std::vector<PixelImage> postprocess_schedule(const Tensor& adversarial, const PixelImage& orig, Family family,
                                             const ClipSchedule& schedule);

/// Binary PPM (P6, maxval 255).
void write_ppm(const PixelImage& img, const std::filesystem::path& path);

}  // namespace tl
