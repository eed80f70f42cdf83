#include "transferlab/postprocess.hpp"

#include "binary_io.hpp"

namespace tl {

ClipSchedule::ClipSchedule(std::vector<int> radii) : radii_(std::move(radii)) {
  if (radii_.empty()) throw std::invalid_argument("clip schedule is empty");
  for (std::size_t i = 0; i < radii_.size(); ++i) {
    if (radii_[i] < 0) throw std::invalid_argument("clip schedule: negative radius " + std::to_string(radii_[i]));
    if (i > 0 && radii_[i] <= radii_[i - 1]) {
      throw std::invalid_argument("clip schedule must be strictly increasing (" + std::to_string(radii_[i - 1]) +
                                  " then " + std::to_string(radii_[i]) + ")");
    }
  }
}

ClipSchedule ClipSchedule::standard() {
  std::vector<int> r;
  for (int v = 0; v <= 150; v += 5) r.push_back(v);
  return ClipSchedule(std::move(r));
}

std::size_t ClipSchedule::index_of(int radius) const {
  const auto it = std::lower_bound(radii_.begin(), radii_.end(), radius);
  if (it == radii_.end() || *it != radius) throw std::out_of_range("radius " + std::to_string(radius) + " not in schedule");
  return static_cast<std::size_t>(it - radii_.begin());
}

FloatImage to_pixel_domain(const Tensor& adversarial, Family family) {
  FloatImage img = reverse_preprocess(adversarial, family);
  img.data = img.data.cwiseMax(0.0).cwiseMin(255.0);
  return img;
}

std::vector<PixelImage> postprocess_schedule(const Tensor& adversarial, const PixelImage& orig, Family family,
                                             const ClipSchedule& schedule) {
  const FloatImage pixels = to_pixel_domain(adversarial, family);
  std::vector<PixelImage> out;
  out.reserve(schedule.size());
  for (int r : schedule.radii()) out.push_back(round_to_pixels(linf_clip(pixels, orig, static_cast<double>(r))));
  return out;
}

void write_ppm(const PixelImage& img, const std::filesystem::path& path) {
  if (img.channels != 3) throw ShapeError("write_ppm: expected 3 channels, got " + image_shape_string(img));
  std::string text = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  text.append(reinterpret_cast<const char*>(img.data.data()), static_cast<std::size_t>(img.size()));
  io::write_file_atomic(path, text);
}

}  // namespace tl
