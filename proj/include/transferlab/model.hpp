#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "transferlab/dataset.hpp"
#include "transferlab/network.hpp"

namespace tl {

/// Anything mapping preprocessed images [N,H,W,C] to logits [N,classes].
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual const std::string& name() const = 0;
  virtual Family family() const = 0;
  /// "A", "B-plain", "B-residual", or "ensemble".
  virtual std::string kind() const = 0;
  virtual Var logits(Tape& tape, Var input) const = 0;
};

/// Frozen network plus the metadata recorded when it was trained.
class TrainedModel : public Classifier {
 public:
  TrainedModel(Network network, std::uint64_t seed, double clean_accuracy);

  const std::string& name() const override { return network_->spec().name; }
  Family family() const override { return network_->spec().family; }
  std::string kind() const override;
  Var logits(Tape& tape, Var input) const override { return network_->forward(tape, input); }

  const Network& network() const { return *network_; }
  const NetworkSpec& spec() const { return network_->spec(); }
  std::uint64_t seed() const { return seed_; }
  double clean_accuracy() const { return clean_accuracy_; }

 private:
  std::shared_ptr<const Network> network_;
  std::uint64_t seed_;
  double clean_accuracy_;
};

/// Logit-averaging ensemble of same-family members.
class Ensemble : public Classifier {
 public:
  Ensemble(std::string name, std::vector<std::shared_ptr<const TrainedModel>> members);

  const std::string& name() const override { return name_; }
  Family family() const override { return members_.front()->family(); }
  std::string kind() const override { return "ensemble"; }
  Var logits(Tape& tape, Var input) const override;

  const std::vector<std::shared_ptr<const TrainedModel>>& members() const { return members_; }

 private:
  std::string name_;
  std::vector<std::shared_ptr<const TrainedModel>> members_;
};

/// Elementwise mean of member logits: summed in member order, then divided.
Tensor average_logits(std::span<const Tensor> member_logits);

struct Prediction {
  Tensor logits;
  Tensor probabilities;
  std::vector<int> classes;
};

/// Index of the largest value; ties go to the lowest index.
int argmax(std::span<const double> row);
std::vector<int> argmax_rows(const Tensor& scores);

Tensor logits_of(const Classifier& model, const Tensor& input);
Prediction predict(const Classifier& model, const Tensor& input);

/// Fraction of images whose argmax matches the label, evaluated in batches.
double accuracy(const Classifier& model, const Dataset& data, Index batch_size = 128);

}  // namespace tl
