#include "transferlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "transferlab/optim.hpp"

namespace tl {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, size() - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, size() - 1};
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.op = "parameter:" + p.name;
  n.value = p.value;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  Var v{this, size() - 1};
  bound_.emplace_back(v.id(), &p);
  return v;
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ShapeError(n.op + ": input recorded on a different tape");
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || node(in).requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, size() - 1};
}

void Tape::check_scalar(const Tensor& t) {
  if (t.size() != 1) throw ShapeError("grad: loss must be a scalar, got shape " + shape_string(t.shape()));
}

void Tape::backward(Var root, const Tensor& seed) {
  Node& r = node(root);
  if (seed.shape() != r.value.shape()) {
    throw ShapeError("backward: seed " + shape_string(seed.shape()) + " vs root " +
                     shape_string(r.value.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  r.grad = seed;
  r.has_grad = true;
  last_visits_ = 0;

  std::vector<Tensor*> in_grads;
  for (Index id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.backward) continue;
    in_grads.assign(n.inputs.size(), nullptr);
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      Node& in = nodes_[static_cast<std::size_t>(n.inputs[i])];
      if (!in.requires_grad) continue;
      if (!in.has_grad) {
        in.grad = Tensor::zeros_like(in.value);
        in.has_grad = true;
      }
      in_grads[i] = &in.grad;
    }
    n.backward(n.grad, in_grads);
    ++last_visits_;
    // Interior gradients are no longer needed once pushed to the inputs.
    n.grad = Tensor();
    n.has_grad = false;
  }
}

std::vector<Tensor> Tape::gradient(Var loss, std::span<const Var> wrt) {
  check_scalar(value(loss));
  backward(loss, Tensor::constant(value(loss).shape(), 1.0));
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Var& v : wrt) out.push_back(grad(v));
  return out;
}

Tensor Tape::gradient(Var loss, Var wrt) { return gradient(loss, std::span<const Var>(&wrt, 1)).front(); }

void Tape::backward_into_parameters(Var loss) {
  check_scalar(value(loss));
  backward(loss, Tensor::constant(value(loss).shape(), 1.0));
  for (auto& [id, p] : bound_) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.has_grad) p->grad.array() += n.grad.array();
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
}

namespace {

[[noreturn]] void mismatch(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

void require_rank(const std::string& op, const Tensor& t, Index rank) {
  if (t.rank() != rank) {
    throw ShapeError(op + ": expected rank " + std::to_string(rank) + ", got " + shape_string(t.shape()));
  }
}

using ColsPtr = std::shared_ptr<RowMatrix<double>>;

// Rows are output positions (n, oy, ox); columns are (ky, kx, c).
RowMatrix<double> im2col(const Tensor& x, Index k, Index pad, Index oh, Index ow) {
  const Index n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  RowMatrix<double> cols(n * oh * ow, k * k * c);
  const double* src = x.data();
  for (Index b = 0; b < n; ++b) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        double* row = cols.data() + ((b * oh + oy) * ow + ox) * k * k * c;
        for (Index ky = 0; ky < k; ++ky) {
          const Index iy = oy + ky - pad;
          for (Index kx = 0; kx < k; ++kx) {
            const Index ix = ox + kx - pad;
            double* dst = row + (ky * k + kx) * c;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
              std::fill(dst, dst + c, 0.0);
            } else {
              std::memcpy(dst, src + ((b * h + iy) * w + ix) * c, sizeof(double) * c);
            }
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(const RowMatrix<double>& dcols, Tensor& dx, Index k, Index pad, Index oh, Index ow) {
  const Index n = dx.dim(0), h = dx.dim(1), w = dx.dim(2), c = dx.dim(3);
  double* dst = dx.data();
  for (Index b = 0; b < n; ++b) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const double* row = dcols.data() + ((b * oh + oy) * ow + ox) * k * k * c;
        for (Index ky = 0; ky < k; ++ky) {
          const Index iy = oy + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (Index kx = 0; kx < k; ++kx) {
            const Index ix = ox + kx - pad;
            if (ix < 0 || ix >= w) continue;
            double* d = dst + ((b * h + iy) * w + ix) * c;
            const double* s = row + (ky * k + kx) * c;
            for (Index ch = 0; ch < c; ++ch) d[ch] += s[ch];
          }
        }
      }
    }
  }
}

}  // namespace

Var dense(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_rank("dense", xv, 2);
  require_rank("dense", wv, 2);
  if (xv.dim(1) != wv.dim(0)) mismatch("dense", xv.shape(), wv.shape());
  if (bv.size() != wv.dim(1)) mismatch("dense", wv.shape(), bv.shape());

  Tensor out({xv.dim(0), wv.dim(1)});
  out.matrix().noalias() = xv.matrix() * wv.matrix();
  out.matrix().rowwise() += bv.array().transpose().matrix();

  const Tensor* xp = &xv;
  const Tensor* wp = &wv;
  return x.tape().record("dense", std::move(out), {x, w, b},
                         [xp, wp](const Tensor& g, std::span<Tensor* const> in) {
                           if (in[0]) in[0]->matrix().noalias() += g.matrix() * wp->matrix().transpose();
                           if (in[1]) in[1]->matrix().noalias() += xp->matrix().transpose() * g.matrix();
                           if (in[2]) in[2]->array() += g.matrix().colwise().sum().transpose().array();
                         });
}

Var conv2d(Var x, Var w, Var b, Padding padding) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_rank("conv2d", xv, 4);
  require_rank("conv2d", wv, 4);
  const Index k = wv.dim(0);
  if (wv.dim(1) != k || k % 2 == 0) throw ShapeError("conv2d: kernel must be square and odd, got " + shape_string(wv.shape()));
  if (wv.dim(2) != xv.dim(3)) mismatch("conv2d", xv.shape(), wv.shape());
  if (bv.size() != wv.dim(3)) mismatch("conv2d", wv.shape(), bv.shape());
  const Index pad = padding == Padding::Same ? k / 2 : 0;
  const Index oh = conv_output_size(xv.dim(1), k, padding);
  const Index ow = conv_output_size(xv.dim(2), k, padding);
  if (oh <= 0 || ow <= 0) mismatch("conv2d", xv.shape(), wv.shape());
  const Index cout = wv.dim(3);
  const Index n = xv.dim(0);

  Tensor out({n, oh, ow, cout});
  auto out_mat = out.matrix();
  const bool pointwise = k == 1;
  ColsPtr cols;
  if (pointwise) {
    out_mat.noalias() = xv.matrix() * wv.matrix();
  } else {
    cols = std::make_shared<RowMatrix<double>>(im2col(xv, k, pad, oh, ow));
    out_mat.noalias() = *cols * wv.matrix();
  }
  out_mat.rowwise() += bv.array().transpose().matrix();

  const Tensor* xp = &xv;
  const Tensor* wp = &wv;
  return x.tape().record(
      "conv2d", std::move(out), {x, w, b},
      [xp, wp, cols, k, pad, oh, ow, pointwise](const Tensor& g, std::span<Tensor* const> in) {
        const auto gm = g.matrix();
        if (in[0]) {
          if (pointwise) {
            in[0]->matrix().noalias() += gm * wp->matrix().transpose();
          } else {
            RowMatrix<double> dcols = gm * wp->matrix().transpose();
            col2im_add(dcols, *in[0], k, pad, oh, ow);
          }
        }
        if (in[1]) {
          if (pointwise) {
            in[1]->matrix().noalias() += xp->matrix().transpose() * gm;
          } else {
            in[1]->matrix().noalias() += cols->transpose() * gm;
          }
        }
        if (in[2]) in[2]->array() += gm.colwise().sum().transpose().array();
      });
}

Var max_pool2(Var x) {
  const Tensor& xv = x.value();
  require_rank("max_pool2", xv, 4);
  const Index n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
  const Index oh = pool_output_size(h), ow = pool_output_size(w);
  if (oh <= 0 || ow <= 0) throw ShapeError("max_pool2: input too small " + shape_string(xv.shape()));

  Tensor out({n, oh, ow, c});
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(out.size()));
  Index o = 0;
  for (Index b = 0; b < n; ++b) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        for (Index ch = 0; ch < c; ++ch, ++o) {
          Index best = ((b * h + 2 * oy) * w + 2 * ox) * c + ch;
          for (Index dy = 0; dy < 2; ++dy) {
            for (Index dx = 0; dx < 2; ++dx) {
              const Index idx = ((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
              if (xv[idx] > xv[best]) best = idx;
            }
          }
          out[o] = xv[best];
          (*argmax)[static_cast<std::size_t>(o)] = best;
        }
      }
    }
  }
  return x.tape().record("max_pool2", std::move(out), {x}, [argmax](const Tensor& g, std::span<Tensor* const> in) {
    if (!in[0]) return;
    for (Index i = 0; i < g.size(); ++i) (*in[0])[(*argmax)[static_cast<std::size_t>(i)]] += g[i];
  });
}

Var global_avg_pool(Var x) {
  const Tensor& xv = x.value();
  require_rank("global_avg_pool", xv, 4);
  const Index n = xv.dim(0), hw = xv.dim(1) * xv.dim(2), c = xv.dim(3);
  Tensor out({n, c});
  for (Index b = 0; b < n; ++b) {
    Eigen::Map<const RowMatrix<double>> plane(xv.data() + b * hw * c, hw, c);
    out.matrix().row(b) = plane.colwise().sum() / static_cast<double>(hw);
  }
  return x.tape().record("global_avg_pool", std::move(out), {x}, [n, hw, c](const Tensor& g, std::span<Tensor* const> in) {
    if (!in[0]) return;
    for (Index b = 0; b < n; ++b) {
      Eigen::Map<RowMatrix<double>> plane(in[0]->data() + b * hw * c, hw, c);
      plane.rowwise() += g.matrix().row(b) / static_cast<double>(hw);
    }
  });
}

Var relu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape(), xv.array().max(0.0));
  const Tensor* xp = &xv;
  return x.tape().record("relu", std::move(out), {x}, [xp](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) in[0]->array() += (xp->array() > 0.0).select(g.array(), 0.0);
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  Shape out_shape = first;
  out_shape.back() = 0;
  std::vector<Index> widths;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      mismatch("concat_channels", first, s);
    }
    widths.push_back(s.back());
    out_shape.back() += s.back();
  }
  Tensor out(out_shape);
  auto om = out.matrix();
  Index col = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    om.middleCols(col, widths[i]) = parts[i].value().matrix();
    col += widths[i];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record("concat_channels", std::move(out), std::move(inputs),
                                     [widths](const Tensor& g, std::span<Tensor* const> in) {
                                       const auto gm = g.matrix();
                                       Index c0 = 0;
                                       for (std::size_t i = 0; i < in.size(); ++i) {
                                         if (in[i]) in[i]->matrix() += gm.middleCols(c0, widths[i]);
                                         c0 += widths[i];
                                       }
                                     });
}

Var add(Var a, Var b) {
  if (a.shape() != b.shape()) mismatch("add", a.shape(), b.shape());
  Tensor out(a.shape(), a.value().array() + b.value().array());
  return a.tape().record("add", std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) in[0]->array() += g.array();
    if (in[1]) in[1]->array() += g.array();
  });
}

Var scale(Var a, double factor) {
  Tensor out(a.shape(), a.value().array() * factor);
  return a.tape().record("scale", std::move(out), {a}, [factor](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) in[0]->array() += g.array() * factor;
  });
}

Var average(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("average: no inputs");
  Tensor out = parts.front().value();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i].shape() != out.shape()) mismatch("average", out.shape(), parts[i].shape());
    out.array() += parts[i].value().array();
  }
  const double n = static_cast<double>(parts.size());
  out.array() /= n;
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record("average", std::move(out), std::move(inputs),
                                     [n](const Tensor& g, std::span<Tensor* const> in) {
                                       for (Tensor* t : in) {
                                         if (t) t->array() += g.array() / n;
                                       }
                                     });
}

Var flatten(Var x) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("flatten: scalar input");
  Tensor out = x.value().reshaped({s[0], x.value().size() / s[0]});
  return x.tape().record("flatten", std::move(out), {x}, [](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) in[0]->array() += g.array();
  });
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank("softmax", logits, 2);
  Tensor out = logits;
  auto m = out.matrix();
  m.colwise() -= m.rowwise().maxCoeff();
  m = m.array().exp().matrix();
  m.array().colwise() /= m.rowwise().sum().array();
  return out;
}

Tensor log_softmax_rows(const Tensor& logits) {
  require_rank("log_softmax", logits, 2);
  Tensor out = logits;
  auto m = out.matrix();
  m.colwise() -= m.rowwise().maxCoeff();
  const Eigen::VectorXd lse = m.array().exp().rowwise().sum().log().matrix();
  m.colwise() -= lse;
  return out;
}

Var softmax(Var x) {
  Tensor out = softmax_rows(x.value());
  auto saved = std::make_shared<Tensor>(out);
  return x.tape().record("softmax", std::move(out), {x}, [saved](const Tensor& g, std::span<Tensor* const> in) {
    if (!in[0]) return;
    const auto smat = saved->matrix();
    const auto gmat = g.matrix();
    const auto s = smat.array();
    const auto gm = gmat.array();
    const Eigen::ArrayXd dot = (s * gm).rowwise().sum();
    in[0]->matrix().array() += s * (gm.colwise() - dot);
  });
}

Var cross_entropy_with_logits(Var logits, std::span<const int> labels, Reduction reduction) {
  const Tensor& z = logits.value();
  require_rank("cross_entropy_with_logits", z, 2);
  const Index n = z.dim(0), k = z.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw ShapeError("cross_entropy_with_logits: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_string(z.shape()));
  }
  for (int y : labels) {
    if (y < 0 || y >= k) throw ShapeError("cross_entropy_with_logits: label " + std::to_string(y) + " out of range");
  }
  const Tensor logp = log_softmax_rows(z);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total -= logp.matrix()(i, labels[static_cast<std::size_t>(i)]);
  const double norm = reduction == Reduction::Mean ? static_cast<double>(n) : 1.0;
  Tensor out(Shape{}, {total / norm});

  std::vector<int> ys(labels.begin(), labels.end());
  auto probs = std::make_shared<Tensor>(softmax_rows(z));
  return logits.tape().record("cross_entropy_with_logits", std::move(out), {logits},
                              [probs, ys, norm](const Tensor& g, std::span<Tensor* const> in) {
                                if (!in[0]) return;
                                RowMatrix<double> d = probs->matrix();
                                for (std::size_t i = 0; i < ys.size(); ++i) d(static_cast<Index>(i), ys[i]) -= 1.0;
                                in[0]->matrix() += d * (g[0] / norm);
                              });
}

Var sum(Var x) {
  Tensor out(Shape{}, {x.value().array().sum()});
  return x.tape().record("sum", std::move(out), {x}, [](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) in[0]->array() += g[0];
  });
}

Var sum_squares(Var x) {
  const Tensor* xp = &x.value();
  Tensor out(Shape{}, {xp->array().square().sum()});
  return x.tape().record("sum_squares", std::move(out), {x}, [xp](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) in[0]->array() += 2.0 * g[0] * xp->array();
  });
}

Var weighted_sum(Var x, const Tensor& weights) {
  if (weights.shape() != x.shape()) mismatch("weighted_sum", x.shape(), weights.shape());
  Tensor out(Shape{}, {(x.value().array() * weights.array()).sum()});
  auto wp = std::make_shared<Tensor>(weights);
  return x.tape().record("weighted_sum", std::move(out), {x}, [wp](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) in[0]->array() += g[0] * wp->array();
  });
}

}  // namespace tl
