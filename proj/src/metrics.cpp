#include "transferlab/metrics.hpp"

#include <numeric>

namespace tl {

double inception_score(const Tensor& probabilities) {
  if (probabilities.rank() != 2 || probabilities.dim(0) == 0) {
    throw std::invalid_argument("inception_score: expected a non-empty [N,K] probability matrix, got " +
                                shape_string(probabilities.shape()));
  }
  const auto p = probabilities.matrix();
  const Eigen::RowVectorXd marginal = p.colwise().mean();
  double kl = 0.0;
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index k = 0; k < p.cols(); ++k) {
      const double v = p(i, k);
      if (v > 0.0) kl += v * (std::log(v) - std::log(marginal[k]));
    }
  }
  kl /= static_cast<double>(p.rows());
  return std::exp(std::max(kl, 0.0));
}

double inception_score(std::span<const PixelImage> images, const Classifier& scorer, Index batch_size) {
  if (images.empty()) throw std::invalid_argument("inception_score: empty image set");
  const auto n = static_cast<Index>(images.size());
  Tensor probs({n, kNumClasses});
  for (Index start = 0; start < n; start += batch_size) {
    const Index len = std::min(batch_size, n - start);
    const Tensor x = preprocess_batch(images.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(len)),
                                      scorer.family());
    const Tensor p = softmax_rows(logits_of(scorer, x));
    probs.matrix().middleRows(start, len) = p.matrix();
  }
  return inception_score(probs);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: series lengths differ");
  if (x.size() < 2) throw std::invalid_argument("spearman: need at least two points");
  const std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  const Eigen::Map<const Eigen::ArrayXd> a(rx.data(), static_cast<Index>(rx.size()));
  const Eigen::Map<const Eigen::ArrayXd> b(ry.data(), static_cast<Index>(ry.size()));
  const Eigen::ArrayXd da = a - a.mean(), db = b - b.mean();
  const double den = std::sqrt((da * da).sum() * (db * db).sum());
  if (den == 0.0) return 0.0;
  return (da * db).sum() / den;
}

CalibrationAccumulator::CalibrationAccumulator(ClipSchedule schedule)
    : schedule_(std::move(schedule)), sums_(schedule_.size()) {
  for (std::size_t r = 0; r < schedule_.size(); ++r) sums_[r].radius = schedule_[r];
}

void CalibrationAccumulator::add(const PixelImage& original, std::span<const PixelImage> per_radius) {
  if (per_radius.size() != schedule_.size()) {
    throw std::invalid_argument("calibration: " + std::to_string(per_radius.size()) + " images for " +
                                std::to_string(schedule_.size()) + " radii");
  }
  for (std::size_t r = 0; r < per_radius.size(); ++r) {
    sums_[r].mean_ssim += ssim(original, per_radius[r]);
    sums_[r].mean_mad += mad(original, per_radius[r]);
    sums_[r].mean_mse += mse_normalized(original, per_radius[r]);
    sums_[r].mean_linf += linf_dist(original, per_radius[r]);
  }
  ++count_;
}

std::vector<CalibrationRow> CalibrationAccumulator::rows() const {
  if (count_ == 0) throw std::logic_error("calibration: no images were added");
  std::vector<CalibrationRow> out = sums_;
  const auto n = static_cast<double>(count_);
  for (auto& row : out) {
    row.mean_ssim /= n;
    row.mean_mad /= n;
    row.mean_mse /= n;
    row.mean_linf /= n;
  }
  return out;
}

std::vector<CalibrationRow> mean_ssim_calibration(std::span<const PixelImage> originals,
                                                  const std::vector<std::vector<PixelImage>>& adversarials_by_radius,
                                                  const ClipSchedule& schedule) {
  if (adversarials_by_radius.size() != schedule.size()) {
    throw std::invalid_argument("mean_ssim_calibration: " + std::to_string(adversarials_by_radius.size()) +
                                " image sets for " + std::to_string(schedule.size()) + " radii");
  }
  if (originals.empty()) throw std::invalid_argument("mean_ssim_calibration: empty image set");
  for (std::size_t r = 0; r < schedule.size(); ++r) {
    if (adversarials_by_radius[r].size() != originals.size()) {
      throw std::invalid_argument("mean_ssim_calibration: radius " + std::to_string(schedule[r]) + " has " +
                                  std::to_string(adversarials_by_radius[r].size()) + " images, expected " +
                                  std::to_string(originals.size()));
    }
  }
  CalibrationAccumulator acc(schedule);
  std::vector<PixelImage> column(schedule.size());
  for (std::size_t i = 0; i < originals.size(); ++i) {
    for (std::size_t r = 0; r < schedule.size(); ++r) column[r] = adversarials_by_radius[r][i];
    acc.add(originals[i], column);
  }
  return acc.rows();
}

}  // namespace tl
