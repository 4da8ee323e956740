#pragma once

// Dense forward kernels shared by the autodiff primitives, the model trace and
// the test oracles. All of them are plain functions of Eigen expressions.

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace deepcat {

template <typename Scalar>
using MatrixR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = MatrixR<double>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

/// log(1 + exp(x)) without overflow.
template <typename Scalar>
Scalar stable_softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Derived>
MatrixR<typename Derived::Scalar> sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return stable_sigmoid(v); });
}

template <typename Derived>
MatrixR<typename Derived::Scalar> softplus(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return stable_softplus(v); });
}

/// Row-wise softmax. Entries where `mask` is false get probability zero; a
/// row with no unmasked entry comes back all zero.
template <typename Derived>
MatrixR<typename Derived::Scalar> masked_row_softmax(const Eigen::MatrixBase<Derived>& x,
                                                     const Mask& mask) {
  using S = typename Derived::Scalar;
  MatrixR<S> out = MatrixR<S>::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    S peak = -std::numeric_limits<S>::infinity();
    for (Index c = 0; c < x.cols(); ++c)
      if (mask(r, c)) peak = std::max(peak, x(r, c));
    if (!std::isfinite(peak)) continue;
    S total = S(0);
    for (Index c = 0; c < x.cols(); ++c) {
      if (!mask(r, c)) continue;
      out(r, c) = std::exp(x(r, c) - peak);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

template <typename Derived>
MatrixR<typename Derived::Scalar> row_softmax(const Eigen::MatrixBase<Derived>& x) {
  return masked_row_softmax(x, Mask::Constant(x.rows(), x.cols(), true));
}

/// Each row scaled to unit Euclidean norm; all-zero rows stay zero.
template <typename Derived>
MatrixR<typename Derived::Scalar> row_l2_normalize(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  MatrixR<S> out = x;
  for (Index r = 0; r < out.rows(); ++r) {
    const S norm = out.row(r).norm();
    if (norm > S(0)) out.row(r) /= norm;
  }
  return out;
}

/// im2col for a width-`kernel_width` same-padded 1-D convolution applied
/// independently to each block of `seq_len` consecutive rows.
template <typename Derived>
MatrixR<typename Derived::Scalar> conv1d_columns(const Eigen::MatrixBase<Derived>& x,
                                                 Index seq_len, Index kernel_width) {
  using S = typename Derived::Scalar;
  const Index channels = x.cols();
  const Index half = kernel_width / 2;
  MatrixR<S> cols = MatrixR<S>::Zero(x.rows(), kernel_width * channels);
  for (Index r = 0; r < x.rows(); ++r) {
    const Index t = r % seq_len;
    for (Index k = 0; k < kernel_width; ++k) {
      const Index src = t + k - half;
      if (src < 0 || src >= seq_len) continue;
      cols.row(r).segment(k * channels, channels) = x.row(r - t + src);
    }
  }
  return cols;
}

/// Cross-correlation of every length-`seq_len` block with `kernel`
/// ((kernel_width * in_channels) x out_channels), zero same-padding.
template <typename DerivedX, typename DerivedK>
MatrixR<typename DerivedX::Scalar> conv1d_same(const Eigen::MatrixBase<DerivedX>& x,
                                               const Eigen::MatrixBase<DerivedK>& kernel,
                                               Index seq_len) {
  const Index width = kernel.rows() / x.cols();
  return conv1d_columns(x, seq_len, width) * kernel;
}

/// Attention probabilities for grouped multi-head scaled dot-product
/// attention. Rows are laid out as consecutive blocks of `seq_len`
/// positions; head h uses columns [h*dk, (h+1)*dk). The result stores, for
/// block b and head h, an seq_len x seq_len probability matrix at rows
/// [b*seq_len, (b+1)*seq_len) and columns [h*seq_len, (h+1)*seq_len).
/// Keys whose `key_valid` flag is false are masked out.
template <typename DerivedQ, typename DerivedK>
MatrixR<typename DerivedQ::Scalar> grouped_attention_probs(
    const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedK>& k,
    const Mask& key_valid, Index seq_len, Index heads) {
  using S = typename DerivedQ::Scalar;
  const Index blocks = q.rows() / seq_len;
  const Index dk = q.cols() / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  MatrixR<S> probs(q.rows(), heads * seq_len);
  Mask mask(seq_len, seq_len);
  for (Index b = 0; b < blocks; ++b) {
    for (Index j = 0; j < seq_len; ++j) mask.col(j).setConstant(key_valid(b * seq_len + j, 0));
    for (Index h = 0; h < heads; ++h) {
      const auto qb = q.block(b * seq_len, h * dk, seq_len, dk);
      const auto kb = k.block(b * seq_len, h * dk, seq_len, dk);
      MatrixR<S> scores = (qb * kb.transpose()) * scale;
      probs.block(b * seq_len, h * seq_len, seq_len, seq_len) = masked_row_softmax(scores, mask);
    }
  }
  return probs;
}

}  // namespace deepcat
