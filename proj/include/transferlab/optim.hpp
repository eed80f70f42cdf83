#pragma once

#include <span>
#include <string>

#include "transferlab/tensor.hpp"

namespace tl {

/// Trainable tensor with its gradient accumulator and Adam moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;

  Parameter() = default;
  Parameter(std::string name_, Tensor value_)
      : name(std::move(name_)),
        value(std::move(value_)),
        grad(Tensor::zeros_like(value)),
        first_moment(Tensor::zeros_like(value)),
        second_moment(Tensor::zeros_like(value)) {}

  void zero_grad() { grad.array().setZero(); }
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// value -= lr * grad. Throws NumericError naming the first non-finite gradient.
void sgd_step(std::span<Parameter> params, double learning_rate);

/// Bias-corrected Adam update; step counts from 1.
void adam_step(std::span<Parameter> params, const AdamOptions& options, long step);

}  // namespace tl
