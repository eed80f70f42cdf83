#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "transferlab/config.hpp"
#include "transferlab/harness.hpp"

namespace tl {

/// Files a pipeline run keeps under its output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path train_data() const { return root / "data" / "train.adv1"; }
  std::filesystem::path pool_data() const { return root / "data" / "pool.adv1"; }
  std::filesystem::path model(const std::string& name) const { return root / "models" / (name + ".advm"); }
  std::filesystem::path curated() const { return root / "curated" / "curated.adv1"; }
  std::filesystem::path curation_report() const { return root / "curated" / "curation.csv"; }
  std::filesystem::path reports() const { return root / "reports"; }
};

/// Trained networks needed by the selected models and the scorer, in
/// architecture order.
std::vector<std::string> required_networks(const RunConfig& cfg);

Dataset training_data(const RunConfig& cfg);
Dataset pool_data(const RunConfig& cfg);

std::vector<std::shared_ptr<const TrainedModel>> train_networks(const RunConfig& cfg, const Dataset& data,
                                                                const ProgressFn& progress = {});

/// Curation followed by the optional max_images cap.
CuratedDataset curate_pool(const RunConfig& cfg, const Dataset& pool, const Roster& roster);

/// Run manifest: config, seeds, dataset checksums, survivors, model metadata.
/// Contains nothing run-specific beyond the inputs, so equal inputs give
/// equal bytes.
std::string manifest_json(const RunConfig& cfg, const Roster& roster, const CuratedDataset& curated,
                          const ExperimentResult& result);

/// pool_index,label followed by one true-class probability column per model.
std::string curation_csv(const CuratedDataset& curated);

struct PipelineRun {
  std::vector<std::shared_ptr<const TrainedModel>> networks;
  CuratedDataset curated;
  ExperimentResult result;
};

/// Every stage in memory; reports are written when out is non-empty.
PipelineRun run_pipeline(const RunConfig& cfg, const ProgressFn& progress = {});

// CLI stages; each reads what the previous one wrote under cfg.out.
void stage_gen_data(const RunConfig& cfg, const ProgressFn& progress = {});
void stage_train(const RunConfig& cfg, const ProgressFn& progress = {});
void stage_curate(const RunConfig& cfg, const ProgressFn& progress = {});
/// Returns the number of images an attack could not run on.
int stage_run(const RunConfig& cfg, const ProgressFn& progress = {});
void stage_report(const RunConfig& cfg, const ProgressFn& progress = {});

}  // namespace tl
