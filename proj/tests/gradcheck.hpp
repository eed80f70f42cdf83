#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "transferlab/autodiff.hpp"
#include "transferlab/random.hpp"

namespace tl::testkit {

// Small random network touching every differentiable primitive:
//   x -> {conv k1, conv k2 -> relu} -> concat -> (+ 1x1 conv) -> maxpool
//     -> conv k3 (same/valid) -> relu -> gap -> dense ----+
//     -> flatten(pool) -> dense ------------------------- add -> logits
//   loss = CE(logits) + <softmax(logits), s> + 0.1 * |gap|^2
struct RandomGraph {
  Index n = 1, h = 4, w = 4, c = 2;
  int k1 = 3, k2 = 1, k3 = 3;
  Padding p3 = Padding::Same;
  Index c1 = 2, c2 = 2, c3 = 3, classes = 3;
  std::vector<int> labels;
  Tensor soft_weights;
  std::vector<Tensor> leaves;
};

struct BuiltGraph {
  Var loss;
  std::vector<Var> leaves;
  std::vector<Var> relu_inputs;
  std::vector<Var> pool_inputs;
};

inline Tensor random_tensor(Rng& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
  return t;
}

inline RandomGraph random_graph(Rng& rng) {
  RandomGraph g;
  g.n = 1 + static_cast<Index>(rng.below(2));
  g.h = rng.below(2) ? 6 : 4;
  g.w = rng.below(2) ? 6 : 4;
  g.c = 1 + static_cast<Index>(rng.below(3));
  g.k1 = rng.below(2) ? 3 : 1;
  g.k2 = rng.below(2) ? 3 : 1;
  g.k3 = rng.below(2) ? 3 : 1;
  const bool can_valid = g.h / 2 >= 3 && g.w / 2 >= 3;
  g.p3 = can_valid && rng.below(2) ? Padding::Valid : Padding::Same;
  g.c1 = 1 + static_cast<Index>(rng.below(3));
  g.c2 = 1 + static_cast<Index>(rng.below(3));
  g.c3 = 1 + static_cast<Index>(rng.below(3));
  g.classes = 2 + static_cast<Index>(rng.below(3));
  for (Index i = 0; i < g.n; ++i) g.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(g.classes))));
  g.soft_weights = random_tensor(rng, {g.n, g.classes}, 1.0);

  const Index cc = g.c1 + g.c2;
  const Index ph = g.h / 2, pw = g.w / 2;
  auto conv = [&](int k, Index cin, Index cout) {
    g.leaves.push_back(random_tensor(rng, {k, k, cin, cout}, 1.0 / std::sqrt(double(k * k * cin))));
    g.leaves.push_back(random_tensor(rng, {cout}, 0.1));
  };
  auto dense = [&](Index in, Index out) {
    g.leaves.push_back(random_tensor(rng, {in, out}, 1.0 / std::sqrt(double(in))));
    g.leaves.push_back(random_tensor(rng, {out}, 0.1));
  };
  g.leaves.push_back(random_tensor(rng, {g.n, g.h, g.w, g.c}, 1.0));
  conv(g.k1, g.c, g.c1);
  conv(g.k2, g.c, g.c2);
  conv(1, cc, cc);
  conv(g.k3, cc, g.c3);
  dense(g.c3, g.classes);
  dense(ph * pw * cc, g.classes);
  return g;
}

inline BuiltGraph build(Tape& tape, const RandomGraph& g, const std::vector<Tensor>& leaves) {
  BuiltGraph b;
  for (const auto& t : leaves) b.leaves.push_back(tape.variable(t));
  const auto& L = b.leaves;
  Var a1 = conv2d(L[0], L[1], L[2], Padding::Same);
  Var a2 = conv2d(L[0], L[3], L[4], Padding::Same);
  b.relu_inputs.push_back(a2);
  const Var parts[] = {a1, relu(a2)};
  Var cat = concat_channels(parts);
  Var res = add(cat, conv2d(cat, L[5], L[6], Padding::Same));
  b.pool_inputs.push_back(res);
  Var pooled = max_pool2(res);
  Var e = conv2d(pooled, L[7], L[8], g.p3);
  b.relu_inputs.push_back(e);
  Var gap = global_avg_pool(relu(e));
  Var logits = add(dense(gap, L[9], L[10]), dense(flatten(pooled), L[11], L[12]));
  Var ce = cross_entropy_with_logits(logits, g.labels);
  Var soft = weighted_sum(softmax(logits), g.soft_weights);
  b.loss = add(add(ce, soft), scale(sum_squares(gap), 0.1));
  return b;
}

/// True when no relu input is within margin of zero and every pooling
/// window's winner leads the runner-up by at least margin.
inline bool away_from_kinks(const BuiltGraph& b, double margin) {
  for (const Var& v : b.relu_inputs) {
    if ((v.value().array().abs() < margin).any()) return false;
  }
  for (const Var& v : b.pool_inputs) {
    const Tensor& t = v.value();
    const Index n = t.dim(0), h = t.dim(1), w = t.dim(2), c = t.dim(3);
    for (Index i = 0; i < n; ++i) {
      for (Index y = 0; y + 1 < h; y += 2) {
        for (Index x = 0; x + 1 < w; x += 2) {
          for (Index ch = 0; ch < c; ++ch) {
            double vals[4] = {t.at(i, y, x, ch), t.at(i, y, x + 1, ch), t.at(i, y + 1, x, ch),
                              t.at(i, y + 1, x + 1, ch)};
            std::sort(vals, vals + 4);
            if (vals[3] - vals[2] < margin) return false;
          }
        }
      }
    }
  }
  return true;
}

/// Draws graphs until one sits away from every kink.
inline RandomGraph smooth_random_graph(Rng& rng, double margin = 1e-3) {
  while (true) {
    RandomGraph g = random_graph(rng);
    Tape tape;
    if (away_from_kinks(build(tape, g, g.leaves), margin)) return g;
  }
}

struct FdReport {
  // Per leaf, max |analytic - fd| over max(|analytic|, |fd|) across the
  // leaf's components.
  double max_relative_error = 0.0;
  // Same ratio taken per component, floored at 1e-8. Tiny components are
  // dominated by cancellation in the differences.
  double max_component_error = 0.0;
  Index components = 0;
};

inline double loss_value(const RandomGraph& g, const std::vector<Tensor>& leaves) {
  Tape tape;
  return build(tape, g, leaves).loss.value()[0];
}

/// Reverse-mode gradients of every leaf against a five-point central
/// difference.
inline FdReport finite_difference_check(const RandomGraph& g, double h = 1e-4) {
  Tape tape;
  BuiltGraph b = build(tape, g, g.leaves);
  const std::vector<Tensor> grads = tape.gradient(b.loss, b.leaves);
  FdReport rep;
  std::vector<Tensor> probe = g.leaves;
  for (std::size_t l = 0; l < probe.size(); ++l) {
    double scale = 0.0, err = 0.0;
    for (Index i = 0; i < probe[l].size(); ++i) {
      const double orig = probe[l][i];
      auto at = [&](double d) {
        probe[l][i] = orig + d;
        return loss_value(g, probe);
      };
      const double fd = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      probe[l][i] = orig;
      const double an = grads[l][i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      rep.max_component_error = std::max(rep.max_component_error, std::abs(fd - an) / denom);
      scale = std::max({scale, std::abs(fd), std::abs(an)});
      err = std::max(err, std::abs(fd - an));
      ++rep.components;
    }
    if (scale > 0.0) rep.max_relative_error = std::max(rep.max_relative_error, err / scale);
  }
  return rep;
}

}  // namespace tl::testkit
