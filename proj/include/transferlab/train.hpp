#pragma once

#include <cstdint>
#include <functional>

#include "transferlab/model.hpp"

namespace tl {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double accuracy_gate = 0.95;
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
};

/// Trains with Adam on a seeded 80/20 split of data and gates on the
/// held-out accuracy. Throws GateError naming the network and the accuracy
/// when the gate is not met. Same seed and data give identical parameters.
TrainedModel train(const NetworkSpec& spec, const Dataset& data, const TrainConfig& config,
                   const std::function<void(int epoch, double loss)>& on_epoch = {});

}  // namespace tl
