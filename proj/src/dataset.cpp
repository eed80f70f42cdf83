#include "transferlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "transferlab/random.hpp"

namespace tl {

namespace {

enum class Pattern { Disk = 0, Square = 1, Cross = 2, Stripes = 3, Triangle = 4 };

bool covers(Pattern p, double x, double y, double cx, double cy, double s, double period, double phase) {
  const double dx = x - cx, dy = y - cy;
  switch (p) {
    case Pattern::Disk:
      return dx * dx + dy * dy <= s * s;
    case Pattern::Square:
      return std::abs(dx) <= 0.8 * s && std::abs(dy) <= 0.8 * s;
    case Pattern::Cross: {
      const double arm = 0.3 * s;
      return (std::abs(dx) <= arm && std::abs(dy) <= s) || (std::abs(dy) <= arm && std::abs(dx) <= s);
    }
    case Pattern::Stripes:
      return std::abs(dx) <= 1.3 * s && std::abs(dy) <= 1.3 * s &&
             static_cast<long>(std::floor((dy + 1.3 * s + phase) / period)) % 2 == 0;
    case Pattern::Triangle: {
      // Apex at the top, base at the bottom.
      const double t = (dy + s) / (2.0 * s);
      return t >= 0.0 && t <= 1.0 && std::abs(dx) <= t * s;
    }
  }
  return false;
}

PixelImage draw(Pattern pattern, Rng& rng) {
  PixelImage img(kImageSize, kImageSize, kChannels);
  const double s = rng.uniform(6.0, 10.0);
  const double cx = rng.uniform(11.0, 21.0);
  const double cy = rng.uniform(11.0, 21.0);
  const double period = rng.uniform(2.5, 4.0);
  const double phase = rng.uniform(0.0, period);
  double bg[3], fg[3];
  for (int c = 0; c < 3; ++c) bg[c] = rng.uniform(10.0, 90.0);
  for (int c = 0; c < 3; ++c) fg[c] = rng.uniform(150.0, 245.0);
  for (Index y = 0; y < kImageSize; ++y) {
    for (Index x = 0; x < kImageSize; ++x) {
      const bool on = covers(pattern, x + 0.5, y + 0.5, cx, cy, s, period, phase);
      for (Index c = 0; c < kChannels; ++c) {
        const double v = (on ? fg[c] : bg[c]) + 8.0 * rng.normal();
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return img;
}

}  // namespace

Dataset generate_dataset(std::uint64_t seed, int per_class_count) {
  if (per_class_count < 1) throw std::invalid_argument("generate_dataset: per_class_count must be >= 1");
  Dataset data;
  data.seed = seed;
  const int total = per_class_count * kNumClasses;
  data.images.reserve(static_cast<std::size_t>(total));
  data.labels.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const int label = i % kNumClasses;
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    data.push_back(draw(static_cast<Pattern>(label), rng), label);
  }
  return data;
}

std::array<int, kNumClasses> label_histogram(const Dataset& data) {
  std::array<int, kNumClasses> h{};
  for (int y : data.labels) ++h.at(static_cast<std::size_t>(y));
  return h;
}

std::uint64_t checksum(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.images[i].size(); ++j) mix(data.images[i].data[j]);
    mix(static_cast<std::uint8_t>(data.labels[i]));
  }
  return h;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.seed = data.seed;
  for (std::size_t i : indices) out.push_back(data.images.at(i), data.labels.at(i));
  return out;
}

DatasetSplit split_dataset(const Dataset& data, std::uint64_t seed, double train_fraction) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5917));
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(data.size())));
  DatasetSplit split;
  split.train = subset(data, std::span(order).first(n_train));
  split.test = subset(data, std::span(order).subspan(n_train));
  return split;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  io::Writer w;
  w.bytes("ADV1", 4);
  w.u32(static_cast<std::uint32_t>(data.size()));
  const Index h = data.size() ? data.images[0].height : kImageSize;
  const Index wd = data.size() ? data.images[0].width : kImageSize;
  const Index c = data.size() ? data.images[0].channels : kChannels;
  w.u16(static_cast<std::uint16_t>(h));
  w.u16(static_cast<std::uint16_t>(wd));
  w.u16(static_cast<std::uint16_t>(c));
  for (const PixelImage& img : data.images) {
    if (img.height != h || img.width != wd || img.channels != c) {
      throw ShapeError("write_dataset: mixed image shapes " + image_shape_string(img));
    }
    w.bytes(img.data.data(), static_cast<std::size_t>(img.size()));
  }
  for (int y : data.labels) w.u8(static_cast<std::uint8_t>(y));
  io::write_file_atomic(path, w.buffer().data(), w.buffer().size());
}

Dataset read_dataset(const std::filesystem::path& path) {
  io::Reader r(io::read_file(path), "dataset " + path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "ADV1") throw FormatError("dataset " + path.string() + ": bad magic");
  const std::uint32_t count = r.u32();
  const Index h = r.u16(), w = r.u16(), c = r.u16();
  if (r.remaining() != static_cast<std::size_t>(count) * static_cast<std::size_t>(h * w * c + 1)) {
    throw FormatError("dataset " + path.string() + ": size does not match header");
  }
  Dataset data;
  data.images.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    PixelImage img(h, w, c);
    r.bytes(img.data.data(), static_cast<std::size_t>(img.size()));
    data.images.push_back(std::move(img));
  }
  for (std::uint32_t i = 0; i < count; ++i) data.labels.push_back(r.u8());
  return data;
}

}  // namespace tl
