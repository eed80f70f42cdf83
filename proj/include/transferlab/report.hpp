#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "transferlab/harness.hpp"

namespace tl {

// CSV files use a header row, comma separators, '\n' line ends and the
// shortest decimal form that reads back to the same double.

/// attack,source,target,radius,correct,incorrect,failed,evaluated,accuracy
std::string transfer_matrix_csv(const TransferMatrix& matrix);
TransferMatrix parse_transfer_matrix_csv(const std::string& text);

/// attack,source,radius,mean_ssim,mean_mad,mean_mse,mean_linf,inception_score
std::string calibration_csv(const CalibrationTable& calibration);
CalibrationTable parse_calibration_csv(const std::string& text);

/// attack,source,evaluated,correct,accuracy,successes,failed
std::string whitebox_csv(const std::vector<WhiteBoxRow>& rows);

/// attack,radius,best_source,best_case_transferability,
/// average_case_transferability,mean_ssim_sources,mean_ssim_sources_radii.
/// Rows with attack "all" average over attacks.
std::string aggregate_csv(const AggregateReport& report);

/// attack,source,target,radius,mean_ssim,accuracy; each curve in descending
/// SSIM order.
std::string ssim_curves_csv(const std::vector<SsimCurve>& curves);

/// Per attack, the strongest source and one appendix row per radius.
std::string appendix_text(const AggregateReport& report);

std::string format_double(double v);

struct ReportFiles {
  static constexpr const char* kTransferMatrix = "transfer_matrix.csv";
  static constexpr const char* kCalibration = "calibration.csv";
  static constexpr const char* kWhiteBox = "whitebox.csv";
  static constexpr const char* kAggregate = "aggregate.csv";
  static constexpr const char* kSsimCurves = "ssim_curves.csv";
  static constexpr const char* kAppendix = "appendix.txt";
  static constexpr const char* kManifest = "manifest.json";
};

/// Writes the derived reports (aggregate, SSIM curves, appendix) for a matrix
/// and calibration. Returns the file names written.
std::vector<std::string> emit_derived_reports(const TransferMatrix& matrix, const CalibrationTable& calibration,
                                              const std::filesystem::path& dir);

/// Writes every report plus the manifest text. Each file is replaced
/// atomically; throws FormatError if the directory cannot be written.
std::vector<std::string> emit_reports(const ExperimentResult& result, const std::string& manifest,
                                      const std::filesystem::path& dir);

/// Writes text to dir/name through a temporary file and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace tl
