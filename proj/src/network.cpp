#include "transferlab/network.hpp"

#include <cmath>
#include <sstream>

#include "transferlab/error.hpp"
#include "transferlab/random.hpp"

namespace tl {

namespace {

struct KindName {
  LayerKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::Input, "input"},     {LayerKind::Conv, "conv"},       {LayerKind::Relu, "relu"},
    {LayerKind::MaxPool, "maxpool"}, {LayerKind::GlobalAvgPool, "gap"}, {LayerKind::Flatten, "flatten"},
    {LayerKind::Dense, "dense"},     {LayerKind::Concat, "concat"},   {LayerKind::Add, "add"},
};

const char* kind_name(LayerKind k) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == k) return kn.name;
  }
  return "?";
}

LayerKind parse_kind(std::string_view s) {
  for (const auto& kn : kKindNames) {
    if (s == kn.name) return kn.kind;
  }
  throw FormatError("network spec: unknown layer kind '" + std::string(s) + "'");
}

// Small builder used by the architecture factories.
class Builder {
 public:
  Builder(std::string name, Family family) {
    spec_.name = std::move(name);
    spec_.family = family;
    spec_.layers.push_back({LayerKind::Input, {}, 0, 0, Padding::Same});
  }

  int input() const { return 0; }
  int conv(int in, int kernel, int units, Padding padding = Padding::Same) {
    return push({LayerKind::Conv, {in}, kernel, units, padding});
  }
  int conv_relu(int in, int kernel, int units, Padding padding = Padding::Same) {
    return relu(conv(in, kernel, units, padding));
  }
  int relu(int in) { return push({LayerKind::Relu, {in}}); }
  int pool(int in) { return push({LayerKind::MaxPool, {in}}); }
  int gap(int in) { return push({LayerKind::GlobalAvgPool, {in}}); }
  int flatten(int in) { return push({LayerKind::Flatten, {in}}); }
  int dense(int in, int units) { return push({LayerKind::Dense, {in}, 0, units}); }
  int concat(std::vector<int> ins) { return push({LayerKind::Concat, std::move(ins)}); }
  int add(int a, int b) { return push({LayerKind::Add, {a, b}}); }

  NetworkSpec finish() { return spec_; }

 private:
  int push(LayerSpec l) {
    spec_.layers.push_back(std::move(l));
    return static_cast<int>(spec_.layers.size()) - 1;
  }
  NetworkSpec spec_;
};

NetworkSpec family_a(Arch arch, std::string name) {
  // Convs per block; the first block is shared by both variants.
  const std::vector<int> blocks = arch == Arch::A16 ? std::vector<int>{2, 2, 2} : std::vector<int>{2, 3, 3};
  Builder b(std::move(name), Family::A);
  int x = b.input();
  int channels = 4;
  for (int convs : blocks) {
    for (int i = 0; i < convs; ++i) x = b.conv_relu(x, 3, channels);
    x = b.pool(x);
    channels *= 2;
  }
  x = b.flatten(x);
  x = b.relu(b.dense(x, 32));
  b.dense(x, kNumClasses);
  return b.finish();
}

// Multi-branch module that halves the spatial size: 1x1, 1x1->3x3 and
// pool->1x1 branches concatenated along channels.
int reduction_module(Builder& b, int x, int width) {
  const int one = b.pool(b.conv_relu(x, 1, width));
  const int three = b.pool(b.conv_relu(b.conv_relu(x, 1, width), 3, width));
  const int pooled = b.conv_relu(b.pool(x), 1, width);
  return b.concat({one, three, pooled});
}

// Same-size multi-branch module with an identity skip-add.
int residual_module(Builder& b, int x, int channels) {
  const int half = channels / 2;
  const int one = b.conv_relu(x, 1, half);
  const int three = b.conv_relu(b.conv_relu(x, 1, half), 3, channels - half);
  return b.relu(b.add(x, b.concat({one, three})));
}

NetworkSpec family_b(Arch arch, std::string name) {
  Builder b(std::move(name), Family::B);
  int x = b.input();
  switch (arch) {
    case Arch::BPlain:
      x = b.pool(b.conv_relu(x, 3, 8));
      x = reduction_module(b, x, 6);
      x = reduction_module(b, x, 12);
      break;
    case Arch::BWide:
      x = b.pool(b.conv_relu(x, 3, 12, Padding::Valid));
      x = reduction_module(b, x, 8);
      x = reduction_module(b, x, 16);
      break;
    case Arch::BResidual:
      x = b.pool(b.conv_relu(x, 3, 8));
      x = residual_module(b, x, 8);
      x = reduction_module(b, x, 6);
      x = residual_module(b, x, 18);
      x = reduction_module(b, x, 12);
      break;
    default:
      throw std::invalid_argument("family_b: not a family B architecture");
  }
  b.dense(b.gap(x), kNumClasses);
  return b.finish();
}

}  // namespace

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os << "network " << name << '\n';
  os << "family " << family_name(family) << '\n';
  os << "input " << height << ' ' << width << ' ' << channels << '\n';
  os << "classes " << classes << '\n';
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    os << "layer " << i << ' ' << kind_name(l.kind);
    if (!l.inputs.empty()) {
      os << " in=";
      for (std::size_t j = 0; j < l.inputs.size(); ++j) os << (j ? "," : "") << l.inputs[j];
    }
    if (l.kind == LayerKind::Conv) {
      os << " k=" << l.kernel << " pad=" << (l.padding == Padding::Same ? "same" : "valid");
    }
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::Dense) os << " units=" << l.units;
    os << '\n';
  }
  return os.str();
}

NetworkSpec NetworkSpec::parse(std::string_view text) {
  NetworkSpec spec;
  spec.layers.clear();
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "network") {
      ls >> spec.name;
    } else if (key == "family") {
      std::string f;
      ls >> f;
      spec.family = parse_family(f);
    } else if (key == "input") {
      ls >> spec.height >> spec.width >> spec.channels;
    } else if (key == "classes") {
      ls >> spec.classes;
    } else if (key == "layer") {
      std::size_t idx;
      std::string kind;
      ls >> idx >> kind;
      if (idx != spec.layers.size()) throw FormatError("network spec: layers out of order at '" + line + "'");
      LayerSpec l;
      l.kind = parse_kind(kind);
      std::string tok;
      while (ls >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw FormatError("network spec: bad token '" + tok + "'");
        const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
        if (k == "in") {
          std::istringstream vs(v);
          std::string item;
          while (std::getline(vs, item, ',')) l.inputs.push_back(std::stoi(item));
        } else if (k == "k") {
          l.kernel = std::stoi(v);
        } else if (k == "units") {
          l.units = std::stoi(v);
        } else if (k == "pad") {
          if (v != "same" && v != "valid") throw FormatError("network spec: bad padding '" + v + "'");
          l.padding = v == "same" ? Padding::Same : Padding::Valid;
        } else {
          throw FormatError("network spec: unknown attribute '" + k + "'");
        }
      }
      spec.layers.push_back(std::move(l));
    } else {
      throw FormatError("network spec: unknown line '" + line + "'");
    }
    if (ls.fail() && !ls.eof()) throw FormatError("network spec: malformed line '" + line + "'");
  }
  infer_shapes(spec);
  return spec;
}

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  if (spec.layers.empty() || spec.layers[0].kind != LayerKind::Input) {
    throw ShapeError("network '" + spec.name + "': layer 0 must be the input");
  }
  std::vector<Shape> shapes;
  std::vector<bool> used(spec.layers.size(), false);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "network '" + spec.name + "' layer " + std::to_string(i) + " (" + kind_name(l.kind) + ")";
    std::vector<Shape> in;
    for (int j : l.inputs) {
      if (j < 0 || static_cast<std::size_t>(j) >= i) throw ShapeError(where + ": input " + std::to_string(j) + " is not an earlier layer");
      in.push_back(shapes[static_cast<std::size_t>(j)]);
      used[static_cast<std::size_t>(j)] = true;
    }
    const std::size_t expected_inputs = l.kind == LayerKind::Input ? 0 : l.kind == LayerKind::Add ? 2 : 1;
    if (l.kind == LayerKind::Concat ? in.size() < 2 : in.size() != expected_inputs) {
      throw ShapeError(where + ": wrong number of inputs");
    }
    auto require_rank = [&](Index r) {
      if (static_cast<Index>(in[0].size()) != r) throw ShapeError(where + ": input shape " + shape_string(in[0]));
    };
    Shape out;
    switch (l.kind) {
      case LayerKind::Input:
        out = {1, spec.height, spec.width, spec.channels};
        break;
      case LayerKind::Conv: {
        require_rank(4);
        if (l.kernel < 1 || l.kernel % 2 == 0 || l.units < 1) throw ShapeError(where + ": bad kernel/units");
        const Index h = conv_output_size(in[0][1], l.kernel, l.padding);
        const Index w = conv_output_size(in[0][2], l.kernel, l.padding);
        if (h < 1 || w < 1) throw ShapeError(where + ": input " + shape_string(in[0]) + " too small");
        out = {1, h, w, l.units};
        break;
      }
      case LayerKind::Relu:
        out = in[0];
        break;
      case LayerKind::MaxPool:
        require_rank(4);
        out = {1, pool_output_size(in[0][1]), pool_output_size(in[0][2]), in[0][3]};
        if (out[1] < 1 || out[2] < 1) throw ShapeError(where + ": input " + shape_string(in[0]) + " too small");
        break;
      case LayerKind::GlobalAvgPool:
        require_rank(4);
        out = {1, in[0][3]};
        break;
      case LayerKind::Flatten:
        out = {1, numel(in[0])};
        break;
      case LayerKind::Dense:
        require_rank(2);
        if (l.units < 1) throw ShapeError(where + ": bad units");
        out = {1, l.units};
        break;
      case LayerKind::Concat: {
        out = in[0];
        for (std::size_t j = 1; j < in.size(); ++j) {
          if (in[j].size() != out.size() || !std::equal(in[j].begin(), in[j].end() - 1, out.begin())) {
            throw ShapeError(where + ": shape mismatch " + shape_string(in[0]) + " vs " + shape_string(in[j]));
          }
          out.back() += in[j].back();
        }
        break;
      }
      case LayerKind::Add:
        if (in[0] != in[1]) throw ShapeError(where + ": shape mismatch " + shape_string(in[0]) + " vs " + shape_string(in[1]));
        out = in[0];
        break;
    }
    shapes.push_back(out);
  }
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i) {
    if (!used[i]) throw ShapeError("network '" + spec.name + "': layer " + std::to_string(i) + " is not consumed");
  }
  if (shapes.back() != Shape{1, spec.classes}) {
    throw ShapeError("network '" + spec.name + "': output " + shape_string(shapes.back()) + " is not [1x" +
                     std::to_string(spec.classes) + "] logits");
  }
  return shapes;
}

std::string_view arch_name(Arch arch) {
  switch (arch) {
    case Arch::A16: return "A-16";
    case Arch::A19: return "A-19";
    case Arch::BPlain: return "B-plain";
    case Arch::BWide: return "B-wide";
    case Arch::BResidual: return "B-residual";
  }
  return "?";
}

Arch parse_arch(std::string_view name) {
  for (Arch a : {Arch::A16, Arch::A19, Arch::BPlain, Arch::BWide, Arch::BResidual}) {
    if (arch_name(a) == name) return a;
  }
  throw FormatError("unknown architecture '" + std::string(name) + "'");
}

NetworkSpec make_spec(Arch arch) {
  const std::string name(arch_name(arch));
  NetworkSpec spec = (arch == Arch::A16 || arch == Arch::A19) ? family_a(arch, name) : family_b(arch, name);
  infer_shapes(spec);
  return spec;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const NetworkSpec& spec) {
  const std::vector<Shape> shapes = infer_shapes(spec);
  std::vector<std::pair<std::string, Shape>> layout;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string prefix = "layer" + std::to_string(i) + "." + kind_name(l.kind);
    if (l.kind == LayerKind::Conv) {
      const Shape& in = shapes[static_cast<std::size_t>(l.inputs[0])];
      layout.push_back({prefix + ".weight", {l.kernel, l.kernel, in[3], l.units}});
      layout.push_back({prefix + ".bias", {l.units}});
    } else if (l.kind == LayerKind::Dense) {
      const Shape& in = shapes[static_cast<std::size_t>(l.inputs[0])];
      layout.push_back({prefix + ".weight", {in[1], l.units}});
      layout.push_back({prefix + ".bias", {l.units}});
    }
  }
  return layout;
}

Network::Network(NetworkSpec spec, std::vector<Parameter> params) : spec_(std::move(spec)), params_(std::move(params)) {
  const auto layout = parameter_layout(spec_);
  if (layout.size() != params_.size()) {
    throw ShapeError("network '" + spec_.name + "': expected " + std::to_string(layout.size()) + " parameters, got " +
                     std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params_[i].name != layout[i].first || params_[i].value.shape() != layout[i].second) {
      throw ShapeError("network '" + spec_.name + "': parameter '" + params_[i].name + "' " +
                       shape_string(params_[i].value.shape()) + " does not match expected '" + layout[i].first +
                       "' " + shape_string(layout[i].second));
    }
    if (params_[i].grad.shape() != params_[i].value.shape()) params_[i].grad = Tensor::zeros_like(params_[i].value);
  }
  int next = 0;
  for (const LayerSpec& l : spec_.layers) {
    const bool has = l.kind == LayerKind::Conv || l.kind == LayerKind::Dense;
    first_param_.push_back(has ? next : -1);
    if (has) next += 2;
  }
}

Network Network::initialize(const NetworkSpec& spec, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x1417));
  std::vector<Parameter> params;
  bool first_weight = true;
  for (auto& [name, shape] : parameter_layout(spec)) {
    Tensor value(shape);
    if (shape.size() > 1) {
      const Index fan_in = numel(shape) / shape.back();
      // He init assumes unit-scale inputs; the first layer sees preprocessed
      // pixels, so bring family A's mean-shifted range down to family B's.
      const double input_scale = first_weight ? pixel_scale(spec.family) * 127.5 : 1.0;
      first_weight = false;
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in)) / input_scale;
      for (Index i = 0; i < value.size(); ++i) value[i] = stddev * rng.normal();
    }
    params.emplace_back(name, std::move(value));
  }
  return Network(spec, std::move(params));
}

Index Network::parameter_count() const {
  Index n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

template <typename Bind>
Var Network::run(Tape&, Var input, Bind&& bind) const {
  const Shape& s = input.shape();
  if (s.size() != 4 || s[1] != spec_.height || s[2] != spec_.width || s[3] != spec_.channels) {
    throw ShapeError("network '" + spec_.name + "': input " + shape_string(s) + " does not match [Nx" +
                     std::to_string(spec_.height) + "x" + std::to_string(spec_.width) + "x" +
                     std::to_string(spec_.channels) + "]");
  }
  std::vector<Var> out(spec_.layers.size());
  out[0] = input;
  for (std::size_t i = 1; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    auto arg = [&](std::size_t j) { return out[static_cast<std::size_t>(l.inputs[j])]; };
    switch (l.kind) {
      case LayerKind::Input:
        throw ShapeError("network: input layer after position 0");
      case LayerKind::Conv: {
        const auto p = static_cast<std::size_t>(first_param_[i]);
        out[i] = conv2d(arg(0), bind(p), bind(p + 1), l.padding);
        break;
      }
      case LayerKind::Dense: {
        const auto p = static_cast<std::size_t>(first_param_[i]);
        out[i] = dense(arg(0), bind(p), bind(p + 1));
        break;
      }
      case LayerKind::Relu: out[i] = relu(arg(0)); break;
      case LayerKind::MaxPool: out[i] = max_pool2(arg(0)); break;
      case LayerKind::GlobalAvgPool: out[i] = global_avg_pool(arg(0)); break;
      case LayerKind::Flatten: out[i] = flatten(arg(0)); break;
      case LayerKind::Add: out[i] = add(arg(0), arg(1)); break;
      case LayerKind::Concat: {
        std::vector<Var> parts;
        for (std::size_t j = 0; j < l.inputs.size(); ++j) parts.push_back(arg(j));
        out[i] = concat_channels(parts);
        break;
      }
    }
  }
  return out.back();
}

Var Network::forward(Tape& tape, Var input) const {
  return run(tape, input, [&](std::size_t p) { return tape.constant(params_[p].value); });
}

Var Network::forward_trainable(Tape& tape, Var input) {
  return run(tape, input, [&](std::size_t p) { return tape.parameter(params_[p]); });
}

}  // namespace tl
