#include "transferlab/model.hpp"

#include "transferlab/error.hpp"

namespace tl {

TrainedModel::TrainedModel(Network network, std::uint64_t seed, double clean_accuracy)
    : network_(std::make_shared<const Network>(std::move(network))), seed_(seed), clean_accuracy_(clean_accuracy) {}

std::string TrainedModel::kind() const {
  const std::string& n = name();
  if (family() == Family::A) return "A";
  return n == "B-residual" ? "B-residual" : "B-plain";
}

Ensemble::Ensemble(std::string name, std::vector<std::shared_ptr<const TrainedModel>> members)
    : name_(std::move(name)), members_(std::move(members)) {
  if (members_.empty()) throw std::invalid_argument("ensemble '" + name_ + "': no members");
  for (const auto& m : members_) {
    if (m->family() != members_.front()->family()) {
      throw std::invalid_argument("ensemble '" + name_ + "': members " + members_.front()->name() + " and " +
                                  m->name() + " use different preprocessing");
    }
  }
}

Var Ensemble::logits(Tape& tape, Var input) const {
  std::vector<Var> parts;
  parts.reserve(members_.size());
  for (const auto& m : members_) parts.push_back(m->logits(tape, input));
  return average(parts);
}

Tensor average_logits(std::span<const Tensor> member_logits) {
  if (member_logits.empty()) throw ShapeError("average_logits: no members");
  Tensor out = member_logits.front();
  for (std::size_t i = 1; i < member_logits.size(); ++i) {
    if (member_logits[i].shape() != out.shape()) {
      throw ShapeError("average_logits: shape mismatch " + shape_string(out.shape()) + " vs " +
                       shape_string(member_logits[i].shape()));
    }
    out.array() += member_logits[i].array();
  }
  out.array() /= static_cast<double>(member_logits.size());
  return out;
}

int argmax(std::span<const double> row) {
  int best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw ShapeError("argmax_rows: expected [N,K], got " + shape_string(scores.shape()));
  std::vector<int> out;
  const Index k = scores.dim(1);
  for (Index i = 0; i < scores.dim(0); ++i) out.push_back(argmax(std::span(scores.data() + i * k, static_cast<std::size_t>(k))));
  return out;
}

Tensor logits_of(const Classifier& model, const Tensor& input) {
  Tape tape;
  return model.logits(tape, tape.constant(input)).value();
}

Prediction predict(const Classifier& model, const Tensor& input) {
  Prediction p;
  p.logits = logits_of(model, input);
  p.probabilities = softmax_rows(p.logits);
  p.classes = argmax_rows(p.logits);
  return p;
}

double accuracy(const Classifier& model, const Dataset& data, Index batch_size) {
  if (data.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    const Tensor x = preprocess_batch(std::span(data.images).subspan(start, end - start), model.family());
    const std::vector<int> cls = argmax_rows(logits_of(model, x));
    for (std::size_t i = start; i < end; ++i) correct += cls[i - start] == data.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace tl
