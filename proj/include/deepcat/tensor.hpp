#pragma once

#include "deepcat/kernels.hpp"
#include "deepcat/rng.hpp"

#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepcat {

class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A learnable tensor that outlives any single graph. Gradients from every
/// graph that reads it accumulate into `grad`.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  /// Row that never receives gradient or updates (the PAD embedding row).
  std::optional<Index> frozen_row;

  Parameter() = default;
  Parameter(std::string n, Mat v, std::optional<Index> frozen = std::nullopt)
      : name(std::move(n)), value(std::move(v)), frozen_row(frozen) {}

  void zero_grad() { grad = Mat::Zero(value.rows(), value.cols()); }
};

class Graph;

/// Handle to one node of a Graph. Every tensor is two-dimensional; vectors
/// are 1 x n rows and scalars are 1 x 1.
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }

  const Mat& value() const;
  /// Gradient accumulated by the last backward(); empty if none reached it.
  const Mat& grad() const;
  bool requires_grad() const;
  std::vector<Index> shape() const { return {rows(), cols()}; }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double item() const;

 private:
  friend class Graph;
  Tensor(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// What a primitive's backward rule sees. `input_grads[i]` is null when input
/// i does not require grad, otherwise a zero-initialised (or partially
/// accumulated) buffer to add into.
struct BackwardContext {
  std::span<const Mat* const> inputs;
  const Mat& output;
  const Mat& output_grad;
  std::span<Mat* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Append-only tape of operations. Nodes are pushed in evaluation order, so
/// insertion order is a topological order and backward() walks it in
/// reverse. A graph supports exactly one backward(); build a fresh graph for
/// every step.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor constant(Mat value, std::string name = "const");
  /// Leaf that reads `p.value` in place and scatters its gradient into `p.grad`.
  Tensor parameter(Parameter& p);
  /// Leaf that owns its value and keeps its own gradient.
  Tensor variable(Mat value, std::string name = "var");

  /// Records a primitive. The backward rule is kept only if some input
  /// requires grad. Throws NumericsError on a non-finite output.
  Tensor record(std::string op, std::vector<Tensor> inputs, Mat value, BackwardFn backward);

  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(int id) const { return nodes_.at(id).op; }
  const std::vector<int>& inputs_of(int id) const { return nodes_.at(id).inputs; }
  const Mat& value_of(int id) const { return *nodes_.at(id).value; }
  bool consumed() const { return consumed_; }

 private:
  friend class Tensor;
  struct Node {
    std::string op;
    std::vector<int> inputs;
    Mat storage;
    const Mat* value = nullptr;
    Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  int push(Node n);

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// ---- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// x + bias, bias is 1 x cols and broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
/// x(r, :) * w(r, 0) for a column of per-row weights.
Tensor mul_col(const Tensor& x, const Tensor& w);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor row_softmax(const Tensor& x);
/// Masked entries get probability zero. Every row needs one unmasked entry.
Tensor masked_row_softmax(const Tensor& x, const Mask& mask);
Tensor row_l2_normalize(const Tensor& x);
/// Maximum over the column axis: rows x 1.
Tensor row_max(const Tensor& x);
/// Maximum over each block of `block` consecutive rows: (rows/block) x cols.
Tensor block_max_rows(const Tensor& x, Index block);
/// Sum over each block of `block` consecutive rows.
Tensor block_sum_rows(const Tensor& x, Index block);
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Row-major reshape.
Tensor reshape(const Tensor& x, Index rows, Index cols);
/// Inverted dropout: kept units divided by (1 - rate). Identity when not training.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);
/// Rows of `table` selected by `ids`; row `frozen_row` of the table receives
/// no gradient.
Tensor gather_rows(const Tensor& table, std::span<const int> ids,
                   std::optional<Index> frozen_row = std::nullopt);
/// Same-padded 1-D convolution over each block of `seq_len` rows.
/// kernel is (width * in_channels) x out_channels.
Tensor conv1d(const Tensor& x, const Tensor& kernel, Index seq_len);
/// Grouped multi-head scaled dot-product attention, see grouped_attention_probs.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const Mask& key_valid, Index seq_len, Index heads);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace deepcat
