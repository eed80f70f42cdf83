#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transferlab/error.hpp"
#include "transferlab/model.hpp"
#include "transferlab/postprocess.hpp"

namespace tl {

namespace detail {

template <typename A, typename B>
void require_same_shape(const Image<A>& a, const Image<B>& b, const char* op) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw ShapeError(std::string(op) + ": shapes " + image_shape_string(a) + " and " + image_shape_string(b) +
                     " differ");
  }
}

template <typename Scalar>
Eigen::ArrayXd gray(const Image<Scalar>& img) {
  Eigen::ArrayXd g(img.height * img.width);
  for (Index p = 0; p < g.size(); ++p) {
    double s = 0.0;
    for (Index c = 0; c < img.channels; ++c) s += static_cast<double>(img.data[p * img.channels + c]);
    g[p] = s / static_cast<double>(img.channels);
  }
  return g;
}

}  // namespace detail

/// Largest absolute coordinate difference.
template <typename Scalar>
double linf_dist(const Image<Scalar>& a, const Image<Scalar>& b) {
  detail::require_same_shape(a, b, "linf_dist");
  if (a.size() == 0) return 0.0;
  return (a.data.template cast<double>() - b.data.template cast<double>()).abs().maxCoeff();
}

inline int linf_dist(const PixelImage& a, const PixelImage& b) {
  detail::require_same_shape(a, b, "linf_dist");
  int best = 0;
  for (Index i = 0; i < a.size(); ++i) best = std::max(best, std::abs(int(a.data[i]) - int(b.data[i])));
  return best;
}

/// Mean absolute difference in pixel units.
template <typename Scalar>
double mad(const Image<Scalar>& a, const Image<Scalar>& b) {
  detail::require_same_shape(a, b, "mad");
  return (a.data.template cast<double>() - b.data.template cast<double>()).abs().mean();
}

/// Mean squared difference of images scaled to [0, 1].
template <typename Scalar>
double mse_normalized(const Image<Scalar>& a, const Image<Scalar>& b) {
  detail::require_same_shape(a, b, "mse_normalized");
  return ((a.data.template cast<double>() - b.data.template cast<double>()) / 255.0).square().mean();
}

inline constexpr Index kSsimWindow = 7;

/// Mean SSIM over every 7x7 window lying fully inside the channel-mean
/// grayscale images. Uniform weights, sample (co)variances, K1 = 0.01,
/// K2 = 0.03, L = 255.
template <typename Scalar>
double ssim(const Image<Scalar>& a, const Image<Scalar>& b) {
  detail::require_same_shape(a, b, "ssim");
  if (a.height < kSsimWindow || a.width < kSsimWindow) {
    throw ShapeError("ssim: image " + image_shape_string(a) + " is smaller than the 7x7 window");
  }
  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  constexpr double n = kSsimWindow * kSsimWindow;
  const Eigen::ArrayXd ga = detail::gray(a), gb = detail::gray(b);
  const Index w = a.width;
  double total = 0.0;
  Index windows = 0;
  for (Index y = 0; y + kSsimWindow <= a.height; ++y) {
    for (Index x = 0; x + kSsimWindow <= w; ++x) {
      double sa = 0.0, sb = 0.0;
      for (Index dy = 0; dy < kSsimWindow; ++dy) {
        sa += ga.segment((y + dy) * w + x, kSsimWindow).sum();
        sb += gb.segment((y + dy) * w + x, kSsimWindow).sum();
      }
      const double ma = sa / n, mb = sb / n;
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (Index dy = 0; dy < kSsimWindow; ++dy) {
        const auto da = ga.segment((y + dy) * w + x, kSsimWindow) - ma;
        const auto db = gb.segment((y + dy) * w + x, kSsimWindow) - mb;
        va += (da * da).sum();
        vb += (db * db).sum();
        cov += (da * db).sum();
      }
      va /= n - 1.0;
      vb /= n - 1.0;
      cov /= n - 1.0;
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

/// exp(mean_x KL(p(y|x) || mean_x p(y|x))) for probability rows [N,K].
double inception_score(const Tensor& probabilities);
/// Scores images with the classifier's softmax output.
double inception_score(std::span<const PixelImage> images, const Classifier& scorer, Index batch_size = 128);

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either series is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct CalibrationRow {
  int radius = 0;
  double mean_ssim = 0.0;
  double mean_mad = 0.0;
  double mean_mse = 0.0;
  double mean_linf = 0.0;
  std::optional<double> inception_score;

  friend bool operator==(const CalibrationRow&, const CalibrationRow&) = default;
};

/// Running per-radius sums, reduced in the order images are added.
class CalibrationAccumulator {
 public:
  explicit CalibrationAccumulator(ClipSchedule schedule);
  /// per_radius[r] is the postprocessed image at schedule radius r.
  void add(const PixelImage& original, std::span<const PixelImage> per_radius);
  std::size_t count() const { return count_; }
  /// Throws std::logic_error if nothing was added.
  std::vector<CalibrationRow> rows() const;

 private:
  ClipSchedule schedule_;
  std::vector<CalibrationRow> sums_;
  std::size_t count_ = 0;
};

/// One row per radius: mean metrics of adversarials[r][i] against
/// originals[i].
std::vector<CalibrationRow> mean_ssim_calibration(std::span<const PixelImage> originals,
                                                  const std::vector<std::vector<PixelImage>>& adversarials_by_radius,
                                                  const ClipSchedule& schedule);

}  // namespace tl
