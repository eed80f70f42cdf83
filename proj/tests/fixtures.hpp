#pragma once

#include <memory>
#include <vector>

#include "transferlab/harness.hpp"
#include "transferlab/train.hpp"

namespace tl::testkit {

/// The five networks trained briefly on a small set, gate disabled. Shared
/// across tests in one binary.
inline const std::vector<std::shared_ptr<const TrainedModel>>& quick_networks() {
  static const auto nets = [] {
    const Dataset data = generate_dataset(3, 80);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.accuracy_gate = 0.0;
    cfg.seed = 3;
    std::vector<std::shared_ptr<const TrainedModel>> out;
    for (Arch a : {Arch::A16, Arch::A19, Arch::BPlain, Arch::BWide, Arch::BResidual}) {
      out.push_back(std::make_shared<TrainedModel>(train(make_spec(a), data, cfg)));
    }
    return out;
  }();
  return nets;
}

inline Roster quick_roster() { return Roster(quick_networks(), roster_names()); }

}  // namespace tl::testkit
