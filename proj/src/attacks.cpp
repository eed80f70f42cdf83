#include "transferlab/attacks.hpp"

#include <cmath>
#include <limits>

#include "transferlab/error.hpp"

namespace tl {

namespace {

Index sample_size(const Tensor& inputs) { return inputs.size() / inputs.dim(0); }

void check_batch(const Tensor& inputs, std::span<const int> labels, const char* op) {
  if (inputs.rank() != 4) throw ShapeError(std::string(op) + ": expected [N,H,W,C], got " + shape_string(inputs.shape()));
  if (static_cast<Index>(labels.size()) != inputs.dim(0)) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for inputs " +
                     shape_string(inputs.shape()));
  }
}

Tensor slice(const Tensor& batch, Index i) {
  const Index n = sample_size(batch);
  Shape s = batch.shape();
  s[0] = 1;
  return Tensor(s, batch.array().segment(i * n, n));
}

std::span<const double> row(const Tensor& logits, Index i) {
  const Index k = logits.dim(1);
  return {logits.data() + i * k, static_cast<std::size_t>(k)};
}

// Rows whose gradient contains NaN/Inf.
std::vector<bool> non_finite_rows(const Tensor& gradient) {
  const Index n = sample_size(gradient);
  std::vector<bool> bad(static_cast<std::size_t>(gradient.dim(0)));
  for (Index i = 0; i < gradient.dim(0); ++i) bad[static_cast<std::size_t>(i)] = !gradient.array().segment(i * n, n).allFinite();
  return bad;
}

void mark_failed(AttackResult& r, const Tensor& original, Index image, const char* op) {
  r.failed = true;
  r.success = false;
  r.adversarial = original;
  r.error = std::string(op) + ": non-finite input gradient for image " + std::to_string(image);
}

// Index of the largest logit other than label; ties go to the lowest index.
int best_other(std::span<const double> z, int label) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(z.size()); ++i) {
    if (i == label) continue;
    if (best < 0 || z[static_cast<std::size_t>(i)] > z[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

AttackResult single(std::vector<AttackResult> results) {
  AttackResult r = std::move(results.front());
  if (r.failed) throw AttackError(r.error);
  return r;
}

}  // namespace

void validate(const FgsmConfig& cfg) {
  if (!(cfg.epsilon >= 0.0)) throw std::invalid_argument("fgsm: epsilon must be >= 0");
}

void validate(const IfgsmConfig& cfg) {
  if (!(cfg.alpha >= 0.0)) throw std::invalid_argument("ifgsm: alpha must be >= 0");
  if (cfg.iterations < 1) throw std::invalid_argument("ifgsm: iterations must be >= 1");
}

void validate(const CwConfig& cfg) {
  if (cfg.max_iterations < 1 || cfg.binary_search_steps < 1) {
    throw std::invalid_argument("cw_l2: max_iterations and binary_search_steps must be >= 1");
  }
  if (!(cfg.learning_rate > 0.0) || !(cfg.initial_const > 0.0)) {
    throw std::invalid_argument("cw_l2: learning_rate and initial_const must be positive");
  }
  if (!(cfg.confidence >= 0.0)) throw std::invalid_argument("cw_l2: confidence must be >= 0");
  if (!(cfg.distance_scale > 0.0)) throw std::invalid_argument("cw_l2: distance_scale must be positive");
}

double logit_margin(std::span<const double> logits, int label) {
  const int other = best_other(logits, label);
  return logits[static_cast<std::size_t>(other)] - logits[static_cast<std::size_t>(label)];
}

InputGradient loss_gradient(const Classifier& model, const Tensor& inputs, std::span<const int> labels) {
  check_batch(inputs, labels, "loss_gradient");
  Tape tape;
  Var x = tape.variable(inputs);
  Var z = model.logits(tape, x);
  Var loss = cross_entropy_with_logits(z, labels, Reduction::Sum);
  InputGradient out;
  out.logits = z.value();
  out.gradient = tape.gradient(loss, x);
  const Tensor logp = log_softmax_rows(out.logits);
  for (Index i = 0; i < inputs.dim(0); ++i) out.loss.push_back(-logp.matrix()(i, labels[static_cast<std::size_t>(i)]));
  return out;
}

Tensor sign_step(const Tensor& x, const Tensor& gradient, double step) {
  if (x.shape() != gradient.shape()) {
    throw ShapeError("sign_step: shape mismatch " + shape_string(x.shape()) + " vs " + shape_string(gradient.shape()));
  }
  const auto& g = gradient.array();
  Tensor out = x;
  out.array() += step * ((g > 0.0).cast<double>() - (g < 0.0).cast<double>());
  return out;
}

std::vector<AttackResult> fgsm(const Classifier& model, const Tensor& inputs, std::span<const int> labels,
                               const FgsmConfig& cfg) {
  validate(cfg);
  check_batch(inputs, labels, "fgsm");
  const InputGradient g = loss_gradient(model, inputs, labels);
  Tensor adv = sign_step(inputs, g.gradient, cfg.epsilon * pixel_scale(model.family()));
  clamp_to_box(adv, model.family());
  const std::vector<int> cls = argmax_rows(logits_of(model, adv));
  const std::vector<bool> bad = non_finite_rows(g.gradient);

  std::vector<AttackResult> out(labels.size());
  for (Index i = 0; i < inputs.dim(0); ++i) {
    auto& r = out[static_cast<std::size_t>(i)];
    r.iterations = 1;
    if (bad[static_cast<std::size_t>(i)]) {
      mark_failed(r, slice(inputs, i), i, "fgsm");
      continue;
    }
    r.adversarial = slice(adv, i);
    r.success = cls[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(i)];
  }
  return out;
}

std::vector<AttackResult> ifgsm(const Classifier& model, const Tensor& inputs, std::span<const int> labels,
                                const IfgsmConfig& cfg, const IterateObserver& observer) {
  validate(cfg);
  check_batch(inputs, labels, "ifgsm");
  const double step = cfg.alpha * pixel_scale(model.family());
  const auto n = static_cast<std::size_t>(inputs.dim(0));
  std::vector<AttackResult> out(n);
  std::vector<bool> failed(n, false);
  Tensor x = inputs;
  for (int t = 0; t < cfg.iterations; ++t) {
    const InputGradient g = loss_gradient(model, x, labels);
    const std::vector<bool> bad = non_finite_rows(g.gradient);
    for (std::size_t i = 0; i < n; ++i) {
      out[i].loss_trace.push_back(g.loss[i]);
      if (bad[i] && !failed[i]) {
        failed[i] = true;
        mark_failed(out[i], slice(inputs, static_cast<Index>(i)), static_cast<Index>(i), "ifgsm");
      }
    }
    x = sign_step(x, g.gradient, step);
    if (cfg.per_iteration_clip) clamp_to_box(x, model.family());
    if (observer) observer(t + 1, x);
  }
  clamp_to_box(x, model.family());
  const std::vector<int> cls = argmax_rows(logits_of(model, x));
  for (std::size_t i = 0; i < n; ++i) {
    out[i].iterations = cfg.iterations;
    if (failed[i]) continue;
    out[i].adversarial = slice(x, static_cast<Index>(i));
    out[i].success = cls[i] != labels[i];
  }
  return out;
}

std::vector<AttackResult> cw_l2(const Classifier& model, const Tensor& inputs, std::span<const int> labels,
                                const CwConfig& cfg) {
  validate(cfg);
  check_batch(inputs, labels, "cw_l2");
  const Family family = model.family();
  const auto n = static_cast<std::size_t>(inputs.dim(0));
  const Index m = sample_size(inputs);
  const double lr = cfg.learning_rate * pixel_scale(family);
  // Distances are measured on [0,1] pixels, times distance_scale.
  const double range = 255.0 * pixel_scale(family);
  const double dist_weight = cfg.distance_scale / (range * range);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  constexpr double kNoUpper = 1e10;
  const double inf = std::numeric_limits<double>::infinity();
  const int check_every = (cfg.max_iterations + 9) / 10;

  std::vector<double> c(n, cfg.initial_const), lower(n, 0.0), upper(n, kNoUpper);
  std::vector<double> best_dist(n, inf), effort_margin(n, -inf);
  std::vector<AttackResult> out(n);
  std::vector<bool> failed(n, false);
  std::vector<Tensor> effort(n);
  Tensor w, m1, m2;

  for (int outer = 0; outer < cfg.binary_search_steps; ++outer) {
    w = inputs;
    m1 = Tensor::zeros_like(inputs);
    m2 = Tensor::zeros_like(inputs);
    std::vector<bool> found(n, false);
    std::vector<double> last_check(n, inf);
    std::vector<Index> active;
    for (std::size_t i = 0; i < n; ++i) {
      if (!failed[i]) active.push_back(static_cast<Index>(i));
    }

    for (int it = 0; it < cfg.max_iterations && !active.empty(); ++it) {
      const auto k = static_cast<Index>(active.size());
      Shape s = inputs.shape();
      s[0] = k;
      Tensor batch(s);
      for (Index j = 0; j < k; ++j) batch.array().segment(j * m, m) = w.array().segment(active[j] * m, m);

      Tape tape;
      Var wv = tape.variable(batch);
      Var z = model.logits(tape, wv);
      const Tensor& logits = z.value();
      Tensor seed = Tensor::zeros_like(logits);
      std::vector<double> objective(static_cast<std::size_t>(k));
      for (Index j = 0; j < k; ++j) {
        const Index ii = active[j];
        const auto i = static_cast<std::size_t>(ii);
        const auto zr = row(logits, j);
        const int y = labels[i];
        const int o = best_other(zr, y);
        const double margin = zr[static_cast<std::size_t>(o)] - zr[static_cast<std::size_t>(y)];
        const double dist =
            (batch.array().segment(j * m, m) - inputs.array().segment(ii * m, m)).square().sum() * dist_weight;
        objective[static_cast<std::size_t>(j)] = dist + c[i] * std::max(-margin, -cfg.confidence);
        if (margin >= cfg.confidence) {
          found[i] = true;
          if (dist < best_dist[i]) {
            best_dist[i] = dist;
            out[i].adversarial = slice(batch, j);
            out[i].objective = objective[static_cast<std::size_t>(j)];
            out[i].distance = dist;
            out[i].success = true;
          }
        } else {
          seed.matrix()(j, y) = c[i];
          seed.matrix()(j, o) = -c[i];
        }
        if (margin > effort_margin[i]) {
          effort_margin[i] = margin;
          effort[i] = slice(batch, j);
        }
      }
      tape.backward(z, seed);
      Tensor grad = tape.grad(wv);
      const std::vector<bool> bad = non_finite_rows(grad);

      std::vector<Index> next;
      const double t = it + 1;
      const double c1 = 1.0 - std::pow(kBeta1, t), c2 = 1.0 - std::pow(kBeta2, t);
      for (Index j = 0; j < k; ++j) {
        const Index ii = active[j];
        const auto i = static_cast<std::size_t>(ii);
        if (bad[static_cast<std::size_t>(j)]) {
          failed[i] = true;
          mark_failed(out[i], slice(inputs, ii), ii, "cw_l2");
          continue;
        }
        auto wi = w.array().segment(ii * m, m);
        auto g = grad.array().segment(j * m, m);
        g += 2.0 * dist_weight * (wi - inputs.array().segment(ii * m, m));
        auto a1 = m1.array().segment(ii * m, m);
        auto a2 = m2.array().segment(ii * m, m);
        a1 = kBeta1 * a1 + (1.0 - kBeta1) * g;
        a2 = kBeta2 * a2 + (1.0 - kBeta2) * g.square();
        wi -= lr * (a1 / c1) / ((a2 / c2).sqrt() + kAdamEps);
        out[i].iterations += 1;

        const double obj = objective[static_cast<std::size_t>(j)];
        if (cfg.abort_early && it % check_every == 0) {
          if (!(obj <= 0.9999 * last_check[i])) continue;
          last_check[i] = obj;
        }
        next.push_back(ii);
      }
      clamp_to_box(w, family);
      active = std::move(next);
    }

    for (std::size_t i = 0; i < n; ++i) {
      if (failed[i]) continue;
      if (found[i]) {
        upper[i] = std::min(upper[i], c[i]);
        c[i] = (lower[i] + upper[i]) / 2.0;
      } else {
        lower[i] = std::max(lower[i], c[i]);
        c[i] = upper[i] < kNoUpper ? (lower[i] + upper[i]) / 2.0 : c[i] * 2.0;
      }
      out[i].best_distance_trace.push_back(best_dist[i]);
    }
  }

  // Images never pushed past the confidence margin return the iterate that
  // came closest.
  for (std::size_t i = 0; i < n; ++i) {
    if (out[i].success || failed[i]) continue;
    const auto ii = static_cast<Index>(i);
    out[i].adversarial = effort[i];
    out[i].distance = (effort[i].array() - inputs.array().segment(ii * m, m)).square().sum() * dist_weight;
    out[i].objective = out[i].distance + c[i] * std::max(-effort_margin[i], -cfg.confidence);
  }
  return out;
}

AttackResult fgsm(const Classifier& model, const Tensor& input, int label, const FgsmConfig& cfg) {
  return single(fgsm(model, input, std::span<const int>(&label, 1), cfg));
}

AttackResult ifgsm(const Classifier& model, const Tensor& input, int label, const IfgsmConfig& cfg) {
  return single(ifgsm(model, input, std::span<const int>(&label, 1), cfg));
}

AttackResult cw_l2(const Classifier& model, const Tensor& input, int label, const CwConfig& cfg) {
  return single(cw_l2(model, input, std::span<const int>(&label, 1), cfg));
}

std::string_view attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Ifgsm: return "ifgsm";
    case AttackKind::CwL2: return "cw";
  }
  return "?";
}

AttackKind parse_attack(std::string_view name) {
  for (AttackKind k : {AttackKind::Fgsm, AttackKind::Ifgsm, AttackKind::CwL2}) {
    if (attack_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown attack '" + std::string(name) + "' (expected fgsm, ifgsm or cw)");
}

std::vector<AttackResult> run_attack(AttackKind kind, const AttackSuite& suite, const Classifier& model,
                                     const Tensor& inputs, std::span<const int> labels) {
  switch (kind) {
    case AttackKind::Fgsm: return fgsm(model, inputs, labels, suite.fgsm);
    case AttackKind::Ifgsm: return ifgsm(model, inputs, labels, suite.ifgsm);
    case AttackKind::CwL2: return cw_l2(model, inputs, labels, suite.cw);
  }
  throw std::invalid_argument("run_attack: unknown attack");
}

}  // namespace tl
