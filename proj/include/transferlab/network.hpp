#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "transferlab/autodiff.hpp"
#include "transferlab/optim.hpp"
#include "transferlab/preprocess.hpp"

namespace tl {

enum class LayerKind { Input, Conv, Relu, MaxPool, GlobalAvgPool, Flatten, Dense, Concat, Add };

struct LayerSpec {
  LayerKind kind = LayerKind::Input;
  std::vector<int> inputs;  // indices of earlier layers
  int kernel = 0;           // Conv
  int units = 0;            // Conv output channels / Dense width
  Padding padding = Padding::Same;
};

/// Layer graph of a single network. layers[0] is the input and the last
/// layer produces the logits. Inputs always refer to earlier layers, so the
/// graph is acyclic by construction.
struct NetworkSpec {
  std::string name;
  Family family = Family::A;
  Index height = kImageSize;
  Index width = kImageSize;
  Index channels = kChannels;
  int classes = kNumClasses;
  std::vector<LayerSpec> layers;

  /// Line-oriented text form, stable across versions of this format.
  std::string describe() const;
  static NetworkSpec parse(std::string_view text);

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

inline bool operator==(const LayerSpec& a, const LayerSpec& b) {
  return a.kind == b.kind && a.inputs == b.inputs && a.kernel == b.kernel && a.units == b.units &&
         a.padding == b.padding;
}

/// Per-layer output shapes for a batch of one. Throws ShapeError if the graph
/// is malformed (dangling layers, bad references, logits width != classes).
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

/// The five trainable desk-scale architectures.
///   A-16 / A-19: plain 3x3 conv stacks, blocks of 2 vs. 2-3-3 convs, then
///                two dense layers.
///   B-plain / B-wide: stacks of multi-branch (1x1, 1x1->3x3, pool->1x1)
///                modules with global average pooling.
///   B-residual: as B-plain with identity skip-add modules interleaved.
enum class Arch { A16, A19, BPlain, BWide, BResidual };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);
NetworkSpec make_spec(Arch arch);

class Network {
 public:
  Network(NetworkSpec spec, std::vector<Parameter> params);

  /// He-normal weights, zero biases, drawn from seed.
  static Network initialize(const NetworkSpec& spec, std::uint64_t seed);

  /// Forward pass with parameters recorded as constants.
  Var forward(Tape& tape, Var input) const;
  /// Forward pass with parameters bound for training.
  Var forward_trainable(Tape& tape, Var input);

  const NetworkSpec& spec() const { return spec_; }
  std::span<const Parameter> parameters() const { return params_; }
  std::span<Parameter> parameters() { return params_; }
  Index parameter_count() const;

 private:
  template <typename Bind>
  Var run(Tape& tape, Var input, Bind&& bind) const;

  NetworkSpec spec_;
  std::vector<Parameter> params_;
  std::vector<int> first_param_;  // per layer, -1 if parameter-free
};

/// Expected parameter names and shapes for a spec, in storage order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const NetworkSpec& spec);

}  // namespace tl
