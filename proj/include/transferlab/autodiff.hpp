#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "transferlab/tensor.hpp"

namespace tl {

class Tape;
struct Parameter;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, Index id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  Index id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  Index id_ = -1;
};

/// Reverse-mode tape, rebuilt for every forward pass (define-by-run).
///
/// Nodes are appended in evaluation order, so the insertion order is already
/// a topological order of the DAG and backward walks it in reverse, visiting
/// each node once. A tape is not thread-safe; use one per worker.
class Tape {
 public:
  // in_grads[i] is null when input i does not need a gradient.
  using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> in_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf bound to a trainable parameter; backward_into_parameters() adds
  /// its gradient to p.grad.
  Var parameter(Parameter& p);

  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  const std::string& op(Var v) const { return node(v).op; }
  Index size() const { return static_cast<Index>(nodes_.size()); }

  /// Propagates seed (shaped like root) back through the tape. Gradients of
  /// earlier calls are discarded first.
  void backward(Var root, const Tensor& seed);

  /// d(loss)/d(leaf) for each requested leaf; zero for leaves off every path.
  std::vector<Tensor> gradient(Var loss, std::span<const Var> wrt);
  Tensor gradient(Var loss, Var wrt);

  /// Scalar backward followed by accumulation into every bound parameter.
  void backward_into_parameters(Var loss);

  /// Gradient held by v after the last backward (zeros if none reached it).
  Tensor grad(Var v) const;

  /// Number of node backward rules run by the last backward call.
  Index last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<Index> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Tensor grad;
    bool has_grad = false;
  };

  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id())); }
  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id())); }
  static void check_scalar(const Tensor& t);

  std::deque<Node> nodes_;
  std::vector<std::pair<Index, Parameter*>> bound_;
  Index last_visits_ = 0;
};

enum class Padding { Same, Valid };

/// Output spatial size of a stride-1 convolution.
inline Index conv_output_size(Index in, Index kernel, Padding padding) {
  return padding == Padding::Same ? in : in - kernel + 1;
}

/// Output spatial size of 2x2 stride-2 max pooling (floor).
inline Index pool_output_size(Index in) { return in / 2; }

enum class Reduction { Mean, Sum };

// Primitive operations. All shapes are checked; mismatches throw ShapeError
// naming the primitive and the offending shapes.

/// x[N,K] * w[K,M] + b[M]
Var dense(Var x, Var w, Var b);
/// Stride-1 convolution, x[N,H,W,C], w[KH,KW,C,O], b[O]; kernel must be odd.
Var conv2d(Var x, Var w, Var b, Padding padding);
Var max_pool2(Var x);
/// x[N,H,W,C] -> [N,C]
Var global_avg_pool(Var x);
Var relu(Var x);
/// Concatenation along the trailing (channel) axis.
Var concat_channels(std::span<const Var> parts);
Var add(Var a, Var b);
Var scale(Var a, double factor);
/// [N, ...] -> [N, prod(...)]
Var flatten(Var x);
/// Row-wise softmax of x[N,K].
Var softmax(Var x);
/// Softmax cross-entropy of logits[N,K] against integer labels.
Var cross_entropy_with_logits(Var logits, std::span<const int> labels, Reduction reduction = Reduction::Mean);
Var sum(Var x);
Var sum_squares(Var x);
/// sum(x * weights) with constant weights.
Var weighted_sum(Var x, const Tensor& weights);

/// Elementwise mean of several same-shaped vars, summed in order then scaled.
Var average(std::span<const Var> parts);

// Non-differentiable helpers on plain tensors.
Tensor softmax_rows(const Tensor& logits);
Tensor log_softmax_rows(const Tensor& logits);

}  // namespace tl
