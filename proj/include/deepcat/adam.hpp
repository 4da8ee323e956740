#pragma once

#include "deepcat/tensor.hpp"

#include <cstdint>
#include <span>

namespace deepcat {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Mat> first_moment;
  std::vector<Mat> second_moment;
};

AdamState make_adam_state(std::span<Parameter* const> params);

/// One bias-corrected Adam update of every parameter from its grad. A
/// parameter's frozen row is neither read nor written. Throws NumericsError
/// naming the parameter if any gradient is non-finite; nothing is updated then.
void adam_step(std::span<Parameter* const> params, AdamState& state, double learning_rate);

}  // namespace deepcat
