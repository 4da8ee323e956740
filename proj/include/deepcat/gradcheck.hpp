#pragma once

#include "deepcat/tensor.hpp"

#include <functional>

namespace deepcat {

/// Scalar-valued function of one tensor, built on the given graph.
using TensorFn = std::function<Tensor(Graph&, const Tensor&)>;
/// Scalar-valued function that reads parameters held elsewhere.
using LossFn = std::function<Tensor(Graph&)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
/// for f at `point`. Throws NumericsError if f is not scalar or if two
/// evaluations at the same point disagree.
double finite_diff_check(const TensorFn& f, const Mat& point, double eps = 1e-5);

/// Same measure with respect to `param`, perturbing param.value in place
/// (restored on return). The frozen row, if any, is skipped.
double finite_diff_check(const LossFn& f, Parameter& param, double eps = 1e-5);

}  // namespace deepcat
