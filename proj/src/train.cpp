#include "transferlab/train.hpp"

#include <numeric>
#include <sstream>

#include "transferlab/error.hpp"
#include "transferlab/random.hpp"

namespace tl {

namespace {

// Per-architecture init stream, so models trained from one seed differ.
std::uint64_t name_stream(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

}  // namespace

TrainedModel train(const NetworkSpec& spec, const Dataset& data, const TrainConfig& config,
                   const std::function<void(int, double)>& on_epoch) {
  if (config.epochs < 1 || config.batch_size < 1) throw std::invalid_argument("train: epochs and batch_size must be >= 1");
  const DatasetSplit split = split_dataset(data, config.seed, config.train_fraction);
  if (split.train.size() == 0 || split.test.size() == 0) throw std::invalid_argument("train: split leaves an empty side");

  Network net = Network::initialize(spec, mix_seed(config.seed, name_stream(spec.name)));
  const Tensor inputs = preprocess_batch(split.train.images, spec.family);
  const Index sample = inputs.size() / inputs.dim(0);

  Rng rng(mix_seed(config.seed, 0x5a5a));
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  const AdamOptions adam{config.learning_rate};
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto n = static_cast<Index>(end - start);
      Tensor batch({n, spec.height, spec.width, spec.channels});
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        batch.array().segment(static_cast<Index>(i - start) * sample, sample) =
            inputs.array().segment(static_cast<Index>(order[i]) * sample, sample);
        labels.push_back(split.train.labels[order[i]]);
      }
      for (Parameter& p : net.parameters()) p.zero_grad();
      Tape tape;
      Var loss = cross_entropy_with_logits(net.forward_trainable(tape, tape.constant(std::move(batch))), labels);
      tape.backward_into_parameters(loss);
      adam_step(net.parameters(), adam, ++step);
      epoch_loss += loss.value()[0] * static_cast<double>(n);
    }
    if (on_epoch) on_epoch(epoch, epoch_loss / static_cast<double>(order.size()));
  }

  TrainedModel probe(net, config.seed, 0.0);
  const double acc = accuracy(probe, split.test);
  if (acc < config.accuracy_gate) {
    std::ostringstream os;
    os << "training gate failed for '" << spec.name << "': held-out accuracy " << acc << " < " << config.accuracy_gate;
    throw GateError(os.str());
  }
  return TrainedModel(std::move(net), config.seed, acc);
}

}  // namespace tl
