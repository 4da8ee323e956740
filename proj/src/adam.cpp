#include "deepcat/adam.hpp"

#include <cmath>

namespace deepcat {

AdamState make_adam_state(std::span<Parameter* const> params) {
  AdamState s;
  for (const Parameter* p : params) {
    s.first_moment.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    s.second_moment.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
  return s;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double learning_rate) {
  if (!(learning_rate > 0.0)) throw NumericsError("adam_step: learning rate must be positive");
  if (params.size() != state.first_moment.size()) throw NumericsError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw NumericsError("adam_step: gradient shape mismatch for " + p.name);
    }
    if (state.first_moment[i].rows() != p.value.rows() || state.first_moment[i].cols() != p.value.cols()) {
      throw NumericsError("adam_step: moment shape mismatch for " + p.name);
    }
    if (!p.grad.allFinite()) throw NumericsError("adam_step: non-finite gradient in " + p.name);
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Mat& m = state.first_moment[i];
    Mat& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseAbs2();
    if (p.frozen_row) {
      m.row(*p.frozen_row).setZero();
      v.row(*p.frozen_row).setZero();
    }
    p.value.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  }
}

}  // namespace deepcat
