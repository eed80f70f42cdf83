#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "transferlab/model.hpp"

namespace tl {

// Hyperparameters are in pixel units ([0, 255] scale) and are converted to
// preprocessed units through pixel_scale(model.family()), so a given value
// means the same visual magnitude for both families.

struct FgsmConfig {
  double epsilon = 100.0;
};

struct IfgsmConfig {
  double alpha = 1.0;
  int iterations = 100;
  bool per_iteration_clip = false;
};

struct CwConfig {
  int max_iterations = 100;
  double learning_rate = 7.0;
  double confidence = 50.0;
  double initial_const = 1e-2;
  int binary_search_steps = 5;
  // Weight on the [0,1]-pixel squared distance. The default rescales a
  // 32x32x3 image to the per-coordinate budget of a 224x224x3 one.
  double distance_scale = (32.0 * 32.0) / (224.0 * 224.0);
  // Leave the inner loop once the objective stops improving by 0.01% over a
  // tenth of max_iterations.
  bool abort_early = true;
};

void validate(const FgsmConfig& cfg);
void validate(const IfgsmConfig& cfg);
void validate(const CwConfig& cfg);

struct AttackResult {
  Tensor adversarial;  // [1,H,W,C], preprocessed space, inside the valid box
  bool success = false;
  int iterations = 0;
  // Set when the attack could not run (non-finite gradient); adversarial is
  // then the unmodified input.
  bool failed = false;
  std::string error;

  // C&W: objective and scaled squared L2 distance of the returned
  // adversarial, and the best successful distance after each outer step
  // (infinity until the first success).
  double objective = 0.0;
  double distance = 0.0;
  std::vector<double> best_distance_trace;

  // I-FGSM: cross-entropy J(x_t, y) at each iterate before its step.
  std::vector<double> loss_trace;
};

/// Gradient of the summed cross-entropy w.r.t. a batch of inputs (each row's
/// gradient is independent of the rest of the batch) and the per-image loss.
struct InputGradient {
  Tensor gradient;
  std::vector<double> loss;
  Tensor logits;
};
InputGradient loss_gradient(const Classifier& model, const Tensor& inputs, std::span<const int> labels);

/// x + step * sign(g), with sign(0) = 0.
Tensor sign_step(const Tensor& x, const Tensor& gradient, double step);

// Batched attacks: inputs [N,H,W,C] in the model's preprocessed space, one
// result per image. Per-image failures are reported in the result.
std::vector<AttackResult> fgsm(const Classifier& model, const Tensor& inputs, std::span<const int> labels,
                               const FgsmConfig& cfg);

using IterateObserver = std::function<void(int step, const Tensor& iterates)>;
std::vector<AttackResult> ifgsm(const Classifier& model, const Tensor& inputs, std::span<const int> labels,
                                const IfgsmConfig& cfg, const IterateObserver& observer = {});

std::vector<AttackResult> cw_l2(const Classifier& model, const Tensor& inputs, std::span<const int> labels,
                                const CwConfig& cfg);

// Single-image forms; throw AttackError naming the image on failure.
AttackResult fgsm(const Classifier& model, const Tensor& input, int label, const FgsmConfig& cfg);
AttackResult ifgsm(const Classifier& model, const Tensor& input, int label, const IfgsmConfig& cfg);
AttackResult cw_l2(const Classifier& model, const Tensor& input, int label, const CwConfig& cfg);

/// max_{i != label} z_i - z_label for one logits row.
double logit_margin(std::span<const double> logits, int label);

enum class AttackKind { Fgsm, Ifgsm, CwL2 };
std::string_view attack_name(AttackKind kind);
AttackKind parse_attack(std::string_view name);

struct AttackSuite {
  FgsmConfig fgsm;
  IfgsmConfig ifgsm;
  CwConfig cw;
};

std::vector<AttackResult> run_attack(AttackKind kind, const AttackSuite& suite, const Classifier& model,
                                     const Tensor& inputs, std::span<const int> labels);

}  // namespace tl
