#pragma once

#include <Eigen/Core>

#include <cstdint>

#include "transferlab/tensor.hpp"

namespace tl {

inline constexpr Index kImageSize = 32;
inline constexpr Index kChannels = 3;
inline constexpr int kNumClasses = 5;

/// HWC image, row-major, channels in RGB order.
template <typename Scalar>
struct Image {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Index height = 0;
  Index width = 0;
  Index channels = 0;
  Array data;

  Image() = default;
  Image(Index h, Index w, Index c) : height(h), width(w), channels(c), data(Array::Zero(h * w * c)) {}
  Image(Index h, Index w, Index c, Array values) : height(h), width(w), channels(c), data(std::move(values)) {
    if (data.size() != h * w * c) throw ShapeError("image: value count does not match dimensions");
  }

  Index size() const { return data.size(); }
  Scalar& at(Index y, Index x, Index c) { return data[(y * width + x) * channels + c]; }
  Scalar at(Index y, Index x, Index c) const { return data[(y * width + x) * channels + c]; }

  bool same_shape(const Image& o) const { return height == o.height && width == o.width && channels == o.channels; }
  friend bool operator==(const Image& a, const Image& b) { return a.same_shape(b) && (a.data == b.data).all(); }
};

using PixelImage = Image<std::uint8_t>;
using FloatImage = Image<double>;

template <typename Scalar>
std::string image_shape_string(const Image<Scalar>& img) {
  return shape_string({img.height, img.width, img.channels});
}

/// Widens an 8-bit image to doubles.
inline FloatImage to_float(const PixelImage& img) {
  return {img.height, img.width, img.channels, img.data.cast<double>()};
}

}  // namespace tl
