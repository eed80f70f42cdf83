#include "transferlab/optim.hpp"

#include <cmath>

#include "transferlab/error.hpp"

namespace tl {

namespace {

void require_finite_grads(std::span<Parameter> params) {
  for (const Parameter& p : params) {
    if (p.grad.shape() != p.value.shape()) {
      throw ShapeError("optimizer: gradient shape " + shape_string(p.grad.shape()) + " for parameter '" + p.name +
                       "' of shape " + shape_string(p.value.shape()));
    }
    if (!p.grad.all_finite()) throw NumericError("optimizer: non-finite gradient in parameter '" + p.name + "'");
  }
}

}  // namespace

void sgd_step(std::span<Parameter> params, double learning_rate) {
  require_finite_grads(params);
  for (Parameter& p : params) p.value.array() -= learning_rate * p.grad.array();
}

void adam_step(std::span<Parameter> params, const AdamOptions& o, long step) {
  if (step < 1) throw std::invalid_argument("adam_step: step must be >= 1");
  require_finite_grads(params);
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  for (Parameter& p : params) {
    if (p.first_moment.shape() != p.value.shape()) p.first_moment = Tensor::zeros_like(p.value);
    if (p.second_moment.shape() != p.value.shape()) p.second_moment = Tensor::zeros_like(p.value);
    auto& m = p.first_moment.array();
    auto& v = p.second_moment.array();
    const auto& g = p.grad.array();
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.square();
    p.value.array() -= o.learning_rate * (m / c1) / ((v / c2).sqrt() + o.epsilon);
  }
}

}  // namespace tl
