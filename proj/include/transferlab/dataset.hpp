#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "transferlab/image.hpp"

namespace tl {

/// Labelled 8-bit images.
struct Dataset {
  std::vector<PixelImage> images;
  std::vector<int> labels;
  std::uint64_t seed = 0;

  std::size_t size() const { return images.size(); }
  void push_back(PixelImage img, int label) {
    images.push_back(std::move(img));
    labels.push_back(label);
  }
};

/// Five procedurally drawn 32x32x3 classes: disk, square, cross, stripes,
/// triangle, each with random placement, size, colours and pixel noise.
/// Images are interleaved by class (label = index % 5). Bitwise
/// deterministic for a given seed.
Dataset generate_dataset(std::uint64_t seed, int per_class_count);

std::array<int, kNumClasses> label_histogram(const Dataset& data);

/// FNV-1a over pixels and labels.
std::uint64_t checksum(const Dataset& data);

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// Seeded shuffle, then the first train_fraction of images go to train.
DatasetSplit split_dataset(const Dataset& data, std::uint64_t seed, double train_fraction = 0.8);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

// "ADV1" | u32 count | u16 height | u16 width | u16 channels |
// count*H*W*C u8 pixels | count u8 labels. Little-endian.
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace tl
