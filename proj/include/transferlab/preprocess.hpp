#pragma once

#include <array>
#include <span>
#include <string_view>

#include "transferlab/image.hpp"
#include "transferlab/tensor.hpp"

namespace tl {

/// Input convention of a model family.
///   A: RGB -> BGR, subtract per-channel means (103.939, 116.779, 123.68).
///   B: x -> 2 * (x / 255) - 1, range [-1, 1].
enum class Family { A, B };

std::string_view family_name(Family family);
Family parse_family(std::string_view name);

Tensor preprocess_a(const PixelImage& img);
FloatImage reverse_preprocess_a(const Tensor& t);
Tensor preprocess_b(const PixelImage& img);
FloatImage reverse_preprocess_b(const Tensor& t);

/// Single image -> [1, H, W, C].
Tensor preprocess(const PixelImage& img, Family family);
/// Images -> [N, H, W, C].
Tensor preprocess_batch(std::span<const PixelImage> images, Family family);
/// Accepts [H, W, C] or [1, H, W, C].
FloatImage reverse_preprocess(const Tensor& t, Family family);

/// Preprocessed units per pixel unit (1 for A, 2/255 for B).
double pixel_scale(Family family);

/// Per-channel preprocessed bounds: the images of all-0 and all-255 pixels.
struct Box {
  std::array<double, 3> lo;
  std::array<double, 3> hi;
};
Box valid_box(Family family);

/// Clamps every channel of an NHWC tensor into the family's box.
void clamp_to_box(Tensor& t, Family family);
bool inside_box(const Tensor& t, Family family);

}  // namespace tl
