#include "deepcat/loss.hpp"

#include <cmath>

namespace deepcat {

std::string_view to_string(CmMode m) { return m == CmMode::literal ? "literal" : "shifted"; }

CmMode cm_mode_from_string(std::string_view s) {
  if (s == "literal") return CmMode::literal;
  if (s == "shifted") return CmMode::shifted;
  throw std::invalid_argument("unknown cm_mode '" + std::string(s) + "'");
}

void LossConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
  if (!(lambda1 + lambda2 > 0.0)) throw std::invalid_argument("lambda1 + lambda2 must be > 0");
}

Tensor sigmoid_cross_entropy(const Tensor& logits, const Mat& targets, bool positive_term_only) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw NumericsError("sigmoid_cross_entropy: targets [" + std::to_string(targets.rows()) + "x" +
                        std::to_string(targets.cols()) + "] do not match logits [" + std::to_string(logits.rows()) +
                        "x" + std::to_string(logits.cols()) + "]");
  }
  for (Index i = 0; i < targets.size(); ++i) {
    const double t = targets.data()[i];
    if (t != 0.0 && t != 1.0) throw NumericsError("sigmoid_cross_entropy: targets must be 0 or 1");
  }
  const Mat& s = logits.value();
  // -[t log sig(s) + (1-t) log(1-sig(s))] = softplus(s) - t*s
  // -t log sig(s) = t * softplus(-s)
  Mat value(1, 1);
  value(0, 0) = positive_term_only ? targets.cwiseProduct(deepcat::softplus(-s)).sum()
                                   : (deepcat::softplus(s) - targets.cwiseProduct(s)).sum();
  return logits.graph().record("sigmoid_cross_entropy", {logits}, std::move(value),
                               [targets, positive_term_only](const BackwardContext& c) {
                                 if (!c.input_grads[0]) return;
                                 const Mat sig = deepcat::sigmoid(*c.inputs[0]);
                                 const double g = c.output_grad(0, 0);
                                 if (positive_term_only) {
                                   *c.input_grads[0] += g * targets.cwiseProduct(sig - Mat::Ones(sig.rows(), sig.cols()));
                                 } else {
                                   *c.input_grads[0] += g * (sig - targets);
                                 }
                               });
}

Tensor matrix_approx_loss(const Tensor& cm_hat, const Mat& cm, CmMode mode) {
  if (cm.rows() != cm_hat.rows() || cm.cols() != cm_hat.cols() || cm.rows() != cm.cols()) {
    throw NumericsError("matrix_approx_loss: shape mismatch [" + std::to_string(cm_hat.rows()) + "x" +
                        std::to_string(cm_hat.cols()) + "] vs [" + std::to_string(cm.rows()) + "x" +
                        std::to_string(cm.cols()) + "]");
  }
  const double norm = 1.0 / static_cast<double>(cm.size());
  // Both modes are softplus(coef .* cm_hat) with a fixed coefficient matrix.
  const Mat coef = mode == CmMode::literal ? cm : Mat((1.0 - 2.0 * cm.array()).matrix());
  const Mat z = coef.cwiseProduct(cm_hat.value());
  Mat value(1, 1);
  value(0, 0) = norm * deepcat::softplus(z).sum();
  return cm_hat.graph().record("matrix_approx_loss", {cm_hat}, std::move(value),
                               [coef, z, norm](const BackwardContext& c) {
                                 if (!c.input_grads[0]) return;
                                 *c.input_grads[0] += (c.output_grad(0, 0) * norm) * coef.cwiseProduct(deepcat::sigmoid(z));
                               });
}

Tensor overall_loss(const Tensor& l_pc, const Tensor& l_cm, const LossConfig& cfg) {
  cfg.validate();
  Tensor total = scale(l_pc, cfg.lambda2);
  if (cfg.lambda1 != 0.0) {
    if (!l_cm.valid()) throw NumericsError("overall_loss: lambda1 > 0 but no co-occurrence loss given");
    total = add(total, scale(l_cm, cfg.lambda1));
  }
  return total;
}

}  // namespace deepcat
