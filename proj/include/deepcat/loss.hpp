#pragma once

#include "deepcat/tensor.hpp"

#include <string_view>

namespace deepcat {

/// literal: softplus(+cm_hat * cm), the printed form.
/// shifted: softplus(-cm_hat * (2 cm - 1)), which rewards agreement.
enum class CmMode { literal, shifted };

std::string_view to_string(CmMode m);
CmMode cm_mode_from_string(std::string_view s);

struct LossConfig {
  double lambda1 = 0.1;  // weight of the co-occurrence loss
  double lambda2 = 1.0;  // weight of the classification loss
  CmMode cm_mode = CmMode::shifted;
  /// Diagnostic: keep only the positive-label term of the classification loss.
  bool positive_term_only = false;

  void validate() const;
};

/// Sum over categories of binary cross-entropy with logits, per row, then
/// summed over rows. targets must be 0/1 and the same shape as logits.
Tensor sigmoid_cross_entropy(const Tensor& logits, const Mat& targets, bool positive_term_only = false);

/// (1/|C|^2) * sum_ij softplus(...) per CmMode.
Tensor matrix_approx_loss(const Tensor& cm_hat, const Mat& cm, CmMode mode);

/// lambda1 * l_cm + lambda2 * l_pc. `l_cm` may be undefined when lambda1 == 0.
Tensor overall_loss(const Tensor& l_pc, const Tensor& l_cm, const LossConfig& cfg);

}  // namespace deepcat
