#include "deepcat/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace deepcat {

namespace {

double evaluate(const LossFn& f) {
  Graph g;
  return f(g).item();
}

}  // namespace

double finite_diff_check(const LossFn& f, Parameter& param, double eps) {
  if (!(eps > 0.0)) throw NumericsError("finite_diff_check: eps must be positive");

  const double first = evaluate(f);
  const double second = evaluate(f);
  if (first != second) throw NumericsError("finite_diff_check: function is not deterministic");

  const Mat saved_grad = param.grad;
  param.zero_grad();
  {
    Graph g;
    Tensor loss = f(g);
    g.backward(loss);
  }
  const Mat analytic = param.grad;
  param.grad = saved_grad;

  double worst = 0.0;
  for (Index r = 0; r < param.value.rows(); ++r) {
    if (param.frozen_row && *param.frozen_row == r) continue;
    for (Index c = 0; c < param.value.cols(); ++c) {
      const double orig = param.value(r, c);
      param.value(r, c) = orig + eps;
      const double up = evaluate(f);
      param.value(r, c) = orig - eps;
      const double down = evaluate(f);
      param.value(r, c) = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic(r, c);
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

double finite_diff_check(const TensorFn& f, const Mat& point, double eps) {
  Parameter holder("point", point);
  LossFn wrapped = [&](Graph& g) { return f(g, g.parameter(holder)); };
  return finite_diff_check(wrapped, holder, eps);
}

}  // namespace deepcat
