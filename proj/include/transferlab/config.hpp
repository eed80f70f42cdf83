#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "transferlab/harness.hpp"
#include "transferlab/train.hpp"

namespace tl {

/// Everything a pipeline run depends on. The text form is one key=value per
/// line; '#' starts a comment.
struct RunConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out = "out";
  std::vector<int> radii = ClipSchedule::standard().radii();
  std::vector<std::string> attacks = {"fgsm", "ifgsm", "cw"};
  std::vector<std::string> models = roster_names();

  int train_per_class = 200;
  int pool_per_class = 65;
  int epochs = 30;
  int train_batch_size = 32;
  double train_learning_rate = 1e-3;
  double accuracy_gate = 0.95;

  double curation_threshold = 0.98;
  int min_survivors = 100;
  int max_images = 0;  // 0 keeps every survivor

  int batch_size = 32;
  std::string scorer = "B-residual";
  double fgsm_epsilon = 100.0;
  double ifgsm_alpha = 1.0;
  int ifgsm_iterations = 100;
  bool ifgsm_per_iteration_clip = false;
  int cw_max_iterations = 100;
  double cw_learning_rate = 7.0;
  double cw_confidence = 50.0;
  double cw_initial_const = 1e-2;
  int cw_binary_search_steps = 5;
  double cw_distance_scale = CwConfig{}.distance_scale;
  bool cw_abort_early = true;

  /// Throws FormatError naming the key for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// Every key except out, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
  /// Throws std::invalid_argument if the values are inconsistent.
  void validate() const;
  void validate_attack_configs() const;

  TrainConfig train_config() const;
  ExperimentConfig experiment_config() const;
  std::uint64_t pool_seed() const;
};

/// Applies key=value lines on top of cfg. A JSON document is read as a run
/// manifest and its "config" object is applied instead.
void apply_config_text(RunConfig& cfg, const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

std::vector<std::string> split_list(std::string_view text);

}  // namespace tl
