#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "transferlab/attacks.hpp"
#include "transferlab/metrics.hpp"
#include "transferlab/model.hpp"
#include "transferlab/postprocess.hpp"

namespace tl {

/// The seven classifiers in report order.
const std::vector<std::string>& roster_names();
/// Trained networks behind a roster entry (the entry itself unless it is an
/// ensemble).
std::vector<std::string> roster_members(std::string_view name);

/// Selected roster entries over a set of trained base networks.
class Roster {
 public:
  /// Throws std::invalid_argument for unknown names or missing members.
  Roster(std::vector<std::shared_ptr<const TrainedModel>> base, std::vector<std::string> names);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  const Classifier& model(std::size_t i) const { return *models_[i]; }
  const Classifier& model(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  std::shared_ptr<const TrainedModel> base(std::string_view name) const;
  const std::vector<std::shared_ptr<const TrainedModel>>& base_models() const { return base_; }

  /// Logits of each named entry (roster entry or base network). Every base
  /// network runs once; ensembles average the member logits, which is
  /// bitwise what Ensemble::logits computes.
  std::vector<Tensor> evaluate(std::span<const PixelImage> images, std::span<const std::string> names) const;

 private:
  std::vector<std::shared_ptr<const TrainedModel>> base_;
  std::vector<std::string> names_;
  std::vector<std::shared_ptr<const Classifier>> models_;
};

struct CuratedDataset {
  Dataset data;
  std::vector<std::size_t> pool_index;  // position of each survivor in the pool
  std::size_t pool_size = 0;
  double threshold = 0.0;
  std::vector<std::string> models;
  std::vector<std::vector<double>> confidence;  // [model][survivor] true-class probability
  std::vector<std::size_t> passed;              // pool images each model accepts on its own
};

/// Keeps the pool images every roster model classifies correctly with
/// true-class probability >= threshold. Throws CurationError listing the
/// per-model counts when fewer than min_survivors remain.
CuratedDataset curate(const Dataset& pool, const Roster& roster, double threshold = 0.98,
                      std::size_t min_survivors = 100, Index batch_size = 128);

struct CellCounts {
  int correct = 0;
  int incorrect = 0;
  int failed = 0;  // attack could not run on the image

  int evaluated() const { return correct + incorrect; }
  int total() const { return correct + incorrect + failed; }
  friend bool operator==(const CellCounts&, const CellCounts&) = default;
};

/// Outcome counts indexed by (attack, source, target, radius).
class TransferMatrix {
 public:
  TransferMatrix() = default;
  TransferMatrix(std::vector<std::string> attacks, std::vector<std::string> models, std::vector<int> radii,
                 int curated);

  const std::vector<std::string>& attacks() const { return attacks_; }
  const std::vector<std::string>& models() const { return models_; }
  const std::vector<int>& radii() const { return radii_; }
  int curated() const { return curated_; }

  CellCounts& at(std::size_t attack, std::size_t source, std::size_t target, std::size_t radius);
  const CellCounts& at(std::size_t attack, std::size_t source, std::size_t target, std::size_t radius) const;
  /// correct / evaluated; 0 when nothing was evaluated.
  double accuracy(std::size_t attack, std::size_t source, std::size_t target, std::size_t radius) const;

  std::size_t attack_index(std::string_view name) const;
  std::size_t model_index(std::string_view name) const;
  std::size_t radius_index(int radius) const;

  friend bool operator==(const TransferMatrix&, const TransferMatrix&) = default;

 private:
  std::size_t flat(std::size_t a, std::size_t s, std::size_t t, std::size_t r) const;

  std::vector<std::string> attacks_;
  std::vector<std::string> models_;
  std::vector<int> radii_;
  int curated_ = 0;
  std::vector<CellCounts> cells_;
};

/// Per (attack, source): one calibration row per radius, including the
/// inception score of the postprocessed set.
struct CalibrationTable {
  std::vector<std::string> attacks;
  std::vector<std::string> sources;
  std::vector<std::vector<CalibrationRow>> curves;  // [attack * sources.size() + source]

  const std::vector<CalibrationRow>& at(std::size_t attack, std::size_t source) const;
  std::vector<CalibrationRow>& at(std::size_t attack, std::size_t source);
  friend bool operator==(const CalibrationTable&, const CalibrationTable&) = default;
};

/// Source-model accuracy on its own raw adversarials, before postprocessing.
struct WhiteBoxRow {
  std::string attack;
  std::string source;
  int evaluated = 0;
  int correct = 0;
  int successes = 0;  // attack-reported successes
  int failed = 0;
  double accuracy() const { return evaluated > 0 ? static_cast<double>(correct) / evaluated : 0.0; }
  friend bool operator==(const WhiteBoxRow&, const WhiteBoxRow&) = default;
};

struct ExperimentConfig {
  std::vector<AttackKind> attacks = {AttackKind::Fgsm, AttackKind::Ifgsm, AttackKind::CwL2};
  ClipSchedule schedule = ClipSchedule::standard();
  AttackSuite suite;
  Index batch_size = 32;
  std::string scorer = "B-residual";
};

struct ExperimentResult {
  TransferMatrix matrix;
  CalibrationTable calibration;
  std::vector<WhiteBoxRow> whitebox;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Attacks every curated image with every (attack, source) pair, postprocesses
/// across the schedule and evaluates every roster target. Deterministic for
/// fixed inputs.
ExperimentResult run_experiment(const CuratedDataset& data, const Roster& roster, const ExperimentConfig& config,
                                const ProgressFn& progress = {});

struct SsimPoint {
  double mean_ssim = 0.0;
  int radius = 0;
  double accuracy = 0.0;
};

struct SsimCurve {
  std::string attack;
  std::string source;
  std::string target;
  std::vector<SsimPoint> points;  // descending mean SSIM
};

/// Re-keys every (attack, source, target) accuracy sequence by the mean SSIM
/// of its (attack, source) calibration.
std::vector<SsimCurve> reorganize_by_ssim(const TransferMatrix& matrix, const CalibrationTable& calibration);

struct AggregatePoint {
  int radius = 0;
  std::string best_source;
  double best_case = 0.0;     // mean transferability of the strongest source over all targets
  double average_case = 0.0;  // mean over all sources and targets
  double mean_ssim = 0.0;     // mean over sources at this radius (needs calibration)
};

struct AttackAggregate {
  std::string attack;
  std::vector<AggregatePoint> points;
  double mean_ssim_all = 0.0;  // mean over sources and radii
  std::string appendix_source;  // strongest source averaged over all radii
  std::vector<std::string> appendix;
};

struct AggregateReport {
  std::vector<int> radii;
  std::vector<AttackAggregate> attacks;
  std::vector<double> average_case;  // per radius, mean over attacks
  std::vector<double> mean_ssim;     // per radius, mean over attacks and sources
  bool has_ssim = false;
};

/// Transferability is 1 - accuracy. SSIM columns are filled when a
/// calibration table is supplied.
AggregateReport aggregate(const TransferMatrix& matrix, const CalibrationTable* calibration = nullptr);

/// "Clip range - r, avg. transferability - p%".
std::string appendix_row(int radius, double transferability);

/// Diagonal cells whose accuracy rises by more than tolerance from one radius
/// to the next.
std::vector<std::string> diagonal_monotonicity_violations(const TransferMatrix& matrix, double tolerance = 0.02);

}  // namespace tl
