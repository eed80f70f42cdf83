#include "transferlab/preprocess.hpp"

#include <algorithm>
#include <string>

#include "transferlab/error.hpp"

namespace tl {

namespace {

// Means subtracted from the (blue, green, red) channels of the flipped image.
constexpr std::array<double, 3> kBgrMeans = {103.939, 116.779, 123.68};

void require_rgb(const PixelImage& img, const char* op) {
  if (img.channels != 3) {
    throw ShapeError(std::string(op) + ": expected 3 channels, got " + image_shape_string(img));
  }
}

void require_image_tensor(const Tensor& t, const char* op) {
  const bool hwc = t.rank() == 3 && t.dim(2) == 3;
  const bool nhwc = t.rank() == 4 && t.dim(0) == 1 && t.dim(3) == 3;
  if (!hwc && !nhwc) throw ShapeError(std::string(op) + ": expected [H,W,3] or [1,H,W,3], got " + shape_string(t.shape()));
}

Index height_of(const Tensor& t) { return t.rank() == 4 ? t.dim(1) : t.dim(0); }
Index width_of(const Tensor& t) { return t.rank() == 4 ? t.dim(2) : t.dim(1); }

}  // namespace

std::string_view family_name(Family family) { return family == Family::A ? "A" : "B"; }

Family parse_family(std::string_view name) {
  if (name == "A") return Family::A;
  if (name == "B") return Family::B;
  throw FormatError("unknown model family '" + std::string(name) + "'");
}

Tensor preprocess_a(const PixelImage& img) {
  require_rgb(img, "preprocess_a");
  Tensor out({1, img.height, img.width, 3});
  const Index pixels = img.height * img.width;
  for (Index i = 0; i < pixels; ++i) {
    for (Index c = 0; c < 3; ++c) {
      out[i * 3 + c] = static_cast<double>(img.data[i * 3 + (2 - c)]) - kBgrMeans[c];
    }
  }
  return out;
}

FloatImage reverse_preprocess_a(const Tensor& t) {
  require_image_tensor(t, "reverse_preprocess_a");
  FloatImage out(height_of(t), width_of(t), 3);
  const Index pixels = out.height * out.width;
  for (Index i = 0; i < pixels; ++i) {
    for (Index c = 0; c < 3; ++c) out.data[i * 3 + (2 - c)] = t[i * 3 + c] + kBgrMeans[c];
  }
  return out;
}

Tensor preprocess_b(const PixelImage& img) {
  require_rgb(img, "preprocess_b");
  Tensor out({1, img.height, img.width, 3});
  out.array() = 2.0 * (img.data.cast<double>() / 255.0) - 1.0;
  return out;
}

FloatImage reverse_preprocess_b(const Tensor& t) {
  require_image_tensor(t, "reverse_preprocess_b");
  FloatImage out(height_of(t), width_of(t), 3);
  out.data = (t.array() + 1.0) / 2.0 * 255.0;
  return out;
}

Tensor preprocess(const PixelImage& img, Family family) {
  return family == Family::A ? preprocess_a(img) : preprocess_b(img);
}

Tensor preprocess_batch(std::span<const PixelImage> images, Family family) {
  if (images.empty()) throw ShapeError("preprocess_batch: no images");
  const PixelImage& first = images.front();
  Tensor out({static_cast<Index>(images.size()), first.height, first.width, first.channels});
  const Index stride = first.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_shape(first)) {
      throw ShapeError("preprocess_batch: image " + image_shape_string(images[i]) + " vs " + image_shape_string(first));
    }
    out.array().segment(static_cast<Index>(i) * stride, stride) = preprocess(images[i], family).array();
  }
  return out;
}

FloatImage reverse_preprocess(const Tensor& t, Family family) {
  return family == Family::A ? reverse_preprocess_a(t) : reverse_preprocess_b(t);
}

double pixel_scale(Family family) { return family == Family::A ? 1.0 : 2.0 / 255.0; }

Box valid_box(Family family) {
  PixelImage black(1, 1, 3), white(1, 1, 3);
  white.data.setConstant(255);
  const Tensor lo = preprocess(black, family);
  const Tensor hi = preprocess(white, family);
  return {{lo[0], lo[1], lo[2]}, {hi[0], hi[1], hi[2]}};
}

void clamp_to_box(Tensor& t, Family family) {
  if (t.shape().back() != 3) throw ShapeError("clamp_to_box: expected 3 channels, got " + shape_string(t.shape()));
  const Box box = valid_box(family);
  auto m = t.matrix();
  for (Index c = 0; c < 3; ++c) m.col(c) = m.col(c).cwiseMax(box.lo[c]).cwiseMin(box.hi[c]);
}

bool inside_box(const Tensor& t, Family family) {
  const Box box = valid_box(family);
  const auto m = t.matrix();
  for (Index c = 0; c < 3; ++c) {
    if (m.col(c).minCoeff() < box.lo[c] || m.col(c).maxCoeff() > box.hi[c]) return false;
  }
  return true;
}

}  // namespace tl
