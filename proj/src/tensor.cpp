#include "deepcat/tensor.hpp"

#include <cmath>

#include <sstream>

namespace deepcat {

namespace {

std::string dims(const Mat& m) {
  std::ostringstream os;
  os << '[' << m.rows() << 'x' << m.cols() << ']';
  return os.str();
}

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw NumericsError(op + ": shape mismatch " + dims(a.value()) + " vs " + dims(b.value()));
}

void require_same_graph(const std::string& op, const Tensor& a, const Tensor& b) {
  if (!a.valid() || !b.valid()) throw NumericsError(op + ": undefined tensor");
  if (&a.graph() != &b.graph()) throw NumericsError(op + ": tensors belong to different graphs");
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  require_same_graph(op, a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

void check_finite(const std::string& what, const Mat& m) {
  // x * 0 is 0 for finite x and NaN otherwise; one vectorised pass.
  if (!std::isfinite((m.array() * 0.0).sum())) throw NumericsError(what + ": non-finite value");
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

const Mat& Tensor::value() const {
  if (!valid()) throw NumericsError("value() on undefined tensor");
  return *graph_->node(id_).value;
}

const Mat& Tensor::grad() const {
  if (!valid()) throw NumericsError("grad() on undefined tensor");
  return graph_->node(id_).grad;
}

bool Tensor::requires_grad() const { return valid() && graph_->node(id_).requires_grad; }

double Tensor::item() const {
  const Mat& v = value();
  if (v.size() != 1) throw NumericsError("item(): tensor is " + dims(v) + ", not a scalar");
  return v(0, 0);
}

// ---- Graph ------------------------------------------------------------------

int Graph::push(Node n) {
  if (consumed_) throw NumericsError("graph already consumed by backward()");
  nodes_.push_back(std::move(n));
  Node& back = nodes_.back();
  if (back.value == nullptr) back.value = &back.storage;
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Graph::constant(Mat value, std::string name) {
  check_finite(name, value);
  Node n;
  n.op = std::move(name);
  n.storage = std::move(value);
  return Tensor(this, push(std::move(n)));
}

Tensor Graph::variable(Mat value, std::string name) {
  check_finite(name, value);
  Node n;
  n.op = std::move(name);
  n.storage = std::move(value);
  n.requires_grad = true;
  return Tensor(this, push(std::move(n)));
}

Tensor Graph::parameter(Parameter& p) {
  check_finite(p.name, p.value);
  Node n;
  n.op = "param:" + p.name;
  n.value = &p.value;
  n.requires_grad = true;
  n.param = &p;
  return Tensor(this, push(std::move(n)));
}

Tensor Graph::record(std::string op, std::vector<Tensor> inputs, Mat value, BackwardFn backward) {
  for (const Tensor& t : inputs) {
    if (!t.valid() || &t.graph() != this) throw NumericsError(op + ": input from another graph");
  }
  check_finite(op, value);
  Node n;
  n.op = std::move(op);
  n.storage = std::move(value);
  for (const Tensor& t : inputs) {
    n.inputs.push_back(t.id());
    n.requires_grad = n.requires_grad || t.requires_grad();
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Tensor(this, push(std::move(n)));
}

void Graph::backward(const Tensor& loss) {
  if (!loss.valid() || &loss.graph() != this) throw NumericsError("backward: loss not in this graph");
  if (loss.value().size() != 1) {
    throw NumericsError("backward: loss must be scalar, got " + dims(loss.value()));
  }
  if (consumed_) throw NumericsError("backward: graph already consumed");
  consumed_ = true;

  node(loss.id()).grad = Mat::Ones(1, 1);
  std::vector<const Mat*> in_values;
  std::vector<Mat*> in_grads;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = node(id);
    if (!n.requires_grad || n.grad.size() == 0) continue;
    check_finite("gradient of " + n.op, n.grad);
    if (n.backward) {
      in_values.clear();
      in_grads.clear();
      for (int in : n.inputs) {
        Node& src = node(in);
        in_values.push_back(src.value);
        if (src.requires_grad) {
          if (src.grad.size() == 0) src.grad = Mat::Zero(src.value->rows(), src.value->cols());
          in_grads.push_back(&src.grad);
        } else {
          in_grads.push_back(nullptr);
        }
      }
      n.backward(BackwardContext{in_values, *n.value, n.grad, in_grads});
    }
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
      p.grad += n.grad;
      if (p.frozen_row) p.grad.row(*p.frozen_row).setZero();
    }
  }
}

// ---- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_graph("matmul", a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  return a.graph().record("matmul", {a, b}, a.value() * b.value(), [](const BackwardContext& c) {
    if (c.input_grads[0]) c.input_grads[0]->noalias() += c.output_grad * c.inputs[1]->transpose();
    if (c.input_grads[1]) c.input_grads[1]->noalias() += c.inputs[0]->transpose() * c.output_grad;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_same_graph("matmul_nt", a, b);
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  return a.graph().record("matmul_nt", {a, b}, a.value() * b.value().transpose(),
                          [](const BackwardContext& c) {
                            if (c.input_grads[0]) c.input_grads[0]->noalias() += c.output_grad * *c.inputs[1];
                            if (c.input_grads[1])
                              c.input_grads[1]->noalias() += c.output_grad.transpose() * *c.inputs[0];
                          });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  return a.graph().record("add", {a, b}, a.value() + b.value(), [](const BackwardContext& c) {
    if (c.input_grads[0]) *c.input_grads[0] += c.output_grad;
    if (c.input_grads[1]) *c.input_grads[1] += c.output_grad;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return a.graph().record("sub", {a, b}, a.value() - b.value(), [](const BackwardContext& c) {
    if (c.input_grads[0]) *c.input_grads[0] += c.output_grad;
    if (c.input_grads[1]) *c.input_grads[1] -= c.output_grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Mat out = a.value().cwiseProduct(b.value());
  return a.graph().record("mul", {a, b}, std::move(out), [](const BackwardContext& c) {
    if (c.input_grads[0]) *c.input_grads[0] += c.output_grad.cwiseProduct(*c.inputs[1]);
    if (c.input_grads[1]) *c.input_grads[1] += c.output_grad.cwiseProduct(*c.inputs[0]);
  });
}

Tensor scale(const Tensor& a, double s) {
  return a.graph().record("scale", {a}, a.value() * s, [s](const BackwardContext& c) {
    if (c.input_grads[0]) *c.input_grads[0] += c.output_grad * s;
  });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_same_graph("add_row", x, bias);
  if (bias.rows() != 1 || bias.cols() != x.cols()) shape_error("add_row", x, bias);
  Mat out = x.value().rowwise() + bias.value().row(0);
  return x.graph().record("add_row", {x, bias}, std::move(out), [](const BackwardContext& c) {
    if (c.input_grads[0]) *c.input_grads[0] += c.output_grad;
    if (c.input_grads[1]) *c.input_grads[1] += c.output_grad.colwise().sum();
  });
}

Tensor mul_col(const Tensor& x, const Tensor& w) {
  require_same_graph("mul_col", x, w);
  if (w.cols() != 1 || w.rows() != x.rows()) shape_error("mul_col", x, w);
  Mat out = x.value().array().colwise() * w.value().col(0).array();
  return x.graph().record("mul_col", {x, w}, std::move(out), [](const BackwardContext& c) {
    if (c.input_grads[0])
      c.input_grads[0]->array() += c.output_grad.array().colwise() * c.inputs[1]->col(0).array();
    if (c.input_grads[1])
      c.input_grads[1]->col(0) += c.output_grad.cwiseProduct(*c.inputs[0]).rowwise().sum();
  });
}

Tensor relu(const Tensor& x) {
  Mat out = x.value().cwiseMax(0.0);
  return x.graph().record("relu", {x}, std::move(out), [](const BackwardContext& c) {
    // Subgradient at exactly zero is zero.
    if (c.input_grads[0])
      c.input_grads[0]->array() += (c.inputs[0]->array() > 0.0).select(c.output_grad.array(), 0.0);
  });
}

Tensor sigmoid(const Tensor& x) {
  return x.graph().record("sigmoid", {x}, deepcat::sigmoid(x.value()), [](const BackwardContext& c) {
    if (c.input_grads[0])
      c.input_grads[0]->array() +=
          c.output_grad.array() * c.output.array() * (1.0 - c.output.array());
  });
}

Tensor softplus(const Tensor& x) {
  return x.graph().record("softplus", {x}, deepcat::softplus(x.value()), [](const BackwardContext& c) {
    if (c.input_grads[0])
      c.input_grads[0]->array() += c.output_grad.array() * deepcat::sigmoid(*c.inputs[0]).array();
  });
}

namespace {

void softmax_backward(const BackwardContext& c) {
  if (!c.input_grads[0]) return;
  const Vec dot = c.output_grad.cwiseProduct(c.output).rowwise().sum();
  c.input_grads[0]->array() +=
      c.output.array() * (c.output_grad.colwise() - dot).array();
}

}  // namespace

Tensor row_softmax(const Tensor& x) {
  return x.graph().record("row_softmax", {x}, deepcat::row_softmax(x.value()), softmax_backward);
}

Tensor masked_row_softmax(const Tensor& x, const Mask& mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw NumericsError("masked_row_softmax: mask shape does not match " + dims(x.value()));
  }
  for (Index r = 0; r < mask.rows(); ++r) {
    if (!mask.row(r).any()) throw NumericsError("masked_row_softmax: row " + std::to_string(r) + " fully masked");
  }
  return x.graph().record("masked_row_softmax", {x}, deepcat::masked_row_softmax(x.value(), mask),
                          softmax_backward);
}

Tensor row_l2_normalize(const Tensor& x) {
  return x.graph().record("row_l2_normalize", {x}, deepcat::row_l2_normalize(x.value()),
                          [](const BackwardContext& c) {
                            if (!c.input_grads[0]) return;
                            const Mat& in = *c.inputs[0];
                            for (Index r = 0; r < in.rows(); ++r) {
                              const double norm = in.row(r).norm();
                              if (norm == 0.0) continue;
                              const auto y = c.output.row(r);
                              const auto g = c.output_grad.row(r);
                              c.input_grads[0]->row(r) += (g - g.dot(y) * y) / norm;
                            }
                          });
}

Tensor row_max(const Tensor& x) {
  const Mat& v = x.value();
  Mat out(v.rows(), 1);
  std::vector<Index> arg(static_cast<std::size_t>(v.rows()));
  for (Index r = 0; r < v.rows(); ++r) {
    Index best = 0;
    out(r, 0) = v.row(r).maxCoeff(&best);
    arg[static_cast<std::size_t>(r)] = best;
  }
  return x.graph().record("row_max", {x}, std::move(out), [arg](const BackwardContext& c) {
    if (!c.input_grads[0]) return;
    for (std::size_t r = 0; r < arg.size(); ++r)
      (*c.input_grads[0])(static_cast<Index>(r), arg[r]) += c.output_grad(static_cast<Index>(r), 0);
  });
}

Tensor block_max_rows(const Tensor& x, Index block) {
  const Mat& v = x.value();
  if (block <= 0 || v.rows() % block != 0) {
    throw NumericsError("block_max_rows: " + std::to_string(v.rows()) + " rows not divisible by " +
                        std::to_string(block));
  }
  const Index groups = v.rows() / block;
  Mat out(groups, v.cols());
  std::vector<Index> arg(static_cast<std::size_t>(groups * v.cols()));
  for (Index g = 0; g < groups; ++g) {
    for (Index col = 0; col < v.cols(); ++col) {
      Index best = 0;
      out(g, col) = v.col(col).segment(g * block, block).maxCoeff(&best);
      arg[static_cast<std::size_t>(g * v.cols() + col)] = g * block + best;
    }
  }
  return x.graph().record("block_max_rows", {x}, std::move(out), [arg](const BackwardContext& c) {
    if (!c.input_grads[0]) return;
    const Index cols = c.output.cols();
    for (Index g = 0; g < c.output.rows(); ++g)
      for (Index col = 0; col < cols; ++col)
        (*c.input_grads[0])(arg[static_cast<std::size_t>(g * cols + col)], col) += c.output_grad(g, col);
  });
}

Tensor block_sum_rows(const Tensor& x, Index block) {
  const Mat& v = x.value();
  if (block <= 0 || v.rows() % block != 0) {
    throw NumericsError("block_sum_rows: " + std::to_string(v.rows()) + " rows not divisible by " +
                        std::to_string(block));
  }
  const Index groups = v.rows() / block;
  Mat out(groups, v.cols());
  for (Index g = 0; g < groups; ++g) out.row(g) = v.middleRows(g * block, block).colwise().sum();
  return x.graph().record("block_sum_rows", {x}, std::move(out), [block](const BackwardContext& c) {
    if (!c.input_grads[0]) return;
    for (Index g = 0; g < c.output.rows(); ++g)
      c.input_grads[0]->middleRows(g * block, block).rowwise() += c.output_grad.row(g);
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_same_graph("concat_cols", a, b);
  if (a.rows() != b.rows()) shape_error("concat_cols", a, b);
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index split = a.cols();
  return a.graph().record("concat_cols", {a, b}, std::move(out), [split](const BackwardContext& c) {
    if (c.input_grads[0]) *c.input_grads[0] += c.output_grad.leftCols(split);
    if (c.input_grads[1]) *c.input_grads[1] += c.output_grad.rightCols(c.output_grad.cols() - split);
  });
}

Tensor reshape(const Tensor& x, Index rows, Index cols) {
  if (rows * cols != x.value().size()) {
    throw NumericsError("reshape: cannot view " + dims(x.value()) + " as [" + std::to_string(rows) + "x" +
                        std::to_string(cols) + "]");
  }
  Mat out = Eigen::Map<const Mat>(x.value().data(), rows, cols);
  return x.graph().record("reshape", {x}, std::move(out), [](const BackwardContext& c) {
    if (!c.input_grads[0]) return;
    Eigen::Map<Mat>(c.input_grads[0]->data(), c.output_grad.rows(), c.output_grad.cols()) += c.output_grad;
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw NumericsError("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  Mat mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  Mat out = x.value().cwiseProduct(mask);
  return x.graph().record("dropout", {x}, std::move(out), [mask = std::move(mask)](const BackwardContext& c) {
    if (c.input_grads[0]) *c.input_grads[0] += c.output_grad.cwiseProduct(mask);
  });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids, std::optional<Index> frozen_row) {
  const Mat& t = table.value();
  Mat out(static_cast<Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) {
      throw NumericsError("gather_rows: id " + std::to_string(ids[i]) + " out of range for table " + dims(t));
    }
    out.row(static_cast<Index>(i)) = t.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return table.graph().record("gather_rows", {table}, std::move(out),
                              [idx = std::move(idx), frozen_row](const BackwardContext& c) {
                                if (!c.input_grads[0]) return;
                                for (std::size_t i = 0; i < idx.size(); ++i) {
                                  if (frozen_row && idx[i] == *frozen_row) continue;
                                  c.input_grads[0]->row(idx[i]) += c.output_grad.row(static_cast<Index>(i));
                                }
                              });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, Index seq_len) {
  require_same_graph("conv1d", x, kernel);
  const Index in_ch = x.cols();
  if (seq_len <= 0 || x.rows() % seq_len != 0 || kernel.rows() % in_ch != 0 ||
      (kernel.rows() / in_ch) % 2 == 0) {
    shape_error("conv1d", x, kernel);
  }
  const Index width = kernel.rows() / in_ch;
  Mat cols = conv1d_columns(x.value(), seq_len, width);
  Mat out = cols * kernel.value();
  return x.graph().record(
      "conv1d", {x, kernel}, std::move(out),
      [cols = std::move(cols), seq_len, width, in_ch](const BackwardContext& c) {
        if (c.input_grads[1]) c.input_grads[1]->noalias() += cols.transpose() * c.output_grad;
        if (!c.input_grads[0]) return;
        const Mat dcols = c.output_grad * c.inputs[1]->transpose();
        const Index half = width / 2;
        Mat& dx = *c.input_grads[0];
        for (Index r = 0; r < dcols.rows(); ++r) {
          const Index t = r % seq_len;
          for (Index k = 0; k < width; ++k) {
            const Index src = t + k - half;
            if (src < 0 || src >= seq_len) continue;
            dx.row(r - t + src) += dcols.row(r).segment(k * in_ch, in_ch);
          }
        }
      });
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Mask& key_valid,
                            Index seq_len, Index heads) {
  require_same_shape("multi_head_attention", q, k);
  require_same_shape("multi_head_attention", q, v);
  if (heads <= 0 || q.cols() % heads != 0 || seq_len <= 0 || q.rows() % seq_len != 0 ||
      key_valid.rows() != q.rows() || key_valid.cols() != 1) {
    throw NumericsError("multi_head_attention: incompatible geometry " + dims(q.value()) + " heads=" +
                        std::to_string(heads) + " seq_len=" + std::to_string(seq_len));
  }
  const Index blocks = q.rows() / seq_len;
  for (Index b = 0; b < blocks; ++b) {
    if (!key_valid.middleRows(b * seq_len, seq_len).any()) {
      throw NumericsError("multi_head_attention: sequence " + std::to_string(b) + " has no valid key");
    }
  }
  const Index dk = q.cols() / heads;
  Mat probs = grouped_attention_probs(q.value(), k.value(), key_valid, seq_len, heads);
  Mat out(q.rows(), q.cols());
  const Mat& vv = v.value();
  for (Index b = 0; b < blocks; ++b)
    for (Index h = 0; h < heads; ++h)
      out.block(b * seq_len, h * dk, seq_len, dk).noalias() =
          probs.block(b * seq_len, h * seq_len, seq_len, seq_len) * vv.block(b * seq_len, h * dk, seq_len, dk);

  return q.graph().record(
      "multi_head_attention", {q, k, v}, std::move(out),
      [probs = std::move(probs), seq_len, heads, dk, blocks](const BackwardContext& c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
        const Mat& qv = *c.inputs[0];
        const Mat& kv = *c.inputs[1];
        const Mat& vv = *c.inputs[2];
        for (Index b = 0; b < blocks; ++b) {
          for (Index h = 0; h < heads; ++h) {
            const Index r0 = b * seq_len;
            const Index c0 = h * dk;
            const auto p = probs.block(r0, h * seq_len, seq_len, seq_len);
            const auto dout = c.output_grad.block(r0, c0, seq_len, dk);
            if (c.input_grads[2]) c.input_grads[2]->block(r0, c0, seq_len, dk).noalias() += p.transpose() * dout;
            if (!c.input_grads[0] && !c.input_grads[1]) continue;
            const Mat dp = dout * vv.block(r0, c0, seq_len, dk).transpose();
            const Vec dot = dp.cwiseProduct(p).rowwise().sum();
            const Mat ds = (p.array() * (dp.colwise() - dot).array()).matrix() * inv;
            if (c.input_grads[0])
              c.input_grads[0]->block(r0, c0, seq_len, dk).noalias() += ds * kv.block(r0, c0, seq_len, dk);
            if (c.input_grads[1])
              c.input_grads[1]->block(r0, c0, seq_len, dk).noalias() +=
                  ds.transpose() * qv.block(r0, c0, seq_len, dk);
          }
        }
      });
}

Tensor sum(const Tensor& x) {
  Mat out(1, 1);
  out(0, 0) = x.value().sum();
  return x.graph().record("sum", {x}, std::move(out), [](const BackwardContext& c) {
    if (c.input_grads[0]) c.input_grads[0]->array() += c.output_grad(0, 0);
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

}  // namespace deepcat
