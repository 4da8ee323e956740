#include "deepcat/gradcheck.hpp"
#include "deepcat/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace deepcat {
namespace {

Mat row(std::initializer_list<double> v) {
  Mat m(1, static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

Mat random_mat(Index r, Index c, Rng& rng) {
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2.0, 2.0);
  return m;
}

// ---- rng

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitDoesNotAdvanceParent) {
  Rng a(3);
  Rng b(3);
  (void)a.split(9).next_u64();
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(Rng(3).split(1).next_u64(), Rng(3).split(2).next_u64());
}

TEST(Rng, UniformAndBelowRanges) {
  Rng r(5);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ++hist[r.below(7)];
  }
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng r(11);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(v.begin(), v.end());
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

// ---- forward primitives

TEST(Primitives, SoftmaxOfZerosIsUniform) {
  Graph g;
  const Mat out = row_softmax(g.constant(row({0, 0, 0}))).value();
  for (Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(out(0, i), 1.0 / 3.0);
}

TEST(Primitives, L2NormalizeThreeFour) {
  Graph g;
  const Mat out = row_l2_normalize(g.constant(row({3, 4}))).value();
  EXPECT_DOUBLE_EQ(out(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(out(0, 1), 0.8);
}

TEST(Primitives, L2NormalizeZeroRowStaysZero) {
  Graph g;
  const Mat out = row_l2_normalize(g.constant(Mat::Zero(2, 3))).value();
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(Primitives, ConvSamePaddingHandExample) {
  // Sequence [1,2,3] with kernel [1,0,-1] (cross-correlation, zero pad).
  Graph g;
  Mat x(3, 1);
  x << 1, 2, 3;
  Mat k(3, 1);
  k << 1, 0, -1;
  const Mat out = conv1d(g.constant(x), g.constant(k), 3).value();
  EXPECT_DOUBLE_EQ(out(0, 0), -2.0);
  EXPECT_DOUBLE_EQ(out(1, 0), -2.0);
  EXPECT_DOUBLE_EQ(out(2, 0), 2.0);
}

TEST(Primitives, ConvBlocksDoNotLeakAcrossQueries) {
  Graph g;
  Mat x(6, 1);
  x << 1, 2, 3, 100, 200, 300;
  Mat k(3, 1);
  k << 1, 0, -1;
  const Mat out = conv1d(g.constant(x), g.constant(k), 3).value();
  EXPECT_DOUBLE_EQ(out(2, 0), 2.0);
  EXPECT_DOUBLE_EQ(out(3, 0), -200.0);
}

TEST(Primitives, SoftmaxRowsSumToOne) {
  Rng rng(1);
  Graph g;
  const Mat out = row_softmax(g.constant(random_mat(20, 7, rng) * 10.0)).value();
  for (Index r = 0; r < out.rows(); ++r) {
    EXPECT_NEAR(out.row(r).sum(), 1.0, 1e-9);
    EXPECT_GT(out.row(r).minCoeff(), 0.0);
  }
}

TEST(Primitives, NormalizedRowsHaveUnitNorm) {
  Rng rng(2);
  Graph g;
  const Mat out = row_l2_normalize(g.constant(random_mat(20, 7, rng))).value();
  for (Index r = 0; r < out.rows(); ++r) EXPECT_NEAR(out.row(r).norm(), 1.0, 1e-9);
}

TEST(Primitives, MaskedSoftmaxIgnoresMaskedEntries) {
  Graph g;
  Mask m(1, 3);
  m << true, false, true;
  const Mat out = masked_row_softmax(g.constant(row({0, 50, 0})), m).value();
  EXPECT_DOUBLE_EQ(out(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.5);
}

TEST(Primitives, FullyMaskedRowIsAnError) {
  Graph g;
  const Mask m = Mask::Constant(1, 3, false);
  EXPECT_THROW(masked_row_softmax(g.constant(row({1, 2, 3})), m), NumericsError);
}

TEST(Primitives, DropoutInferenceIsIdentity) {
  Rng rng(3);
  Graph g;
  const Mat x = random_mat(5, 5, rng);
  EXPECT_EQ(dropout(g.constant(x), 0.5, rng, false).value(), x);
}

TEST(Primitives, DropoutMaskReproducesWithSeed) {
  Rng data(4);
  const Mat x = random_mat(8, 8, data);
  Graph g;
  Rng r1(77), r2(77);
  const Mat a = dropout(g.constant(x), 0.5, r1, true).value();
  const Mat b = dropout(g.constant(x), 0.5, r2, true).value();
  EXPECT_EQ(a, b);
  for (Index i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a.data()[i] == 0.0 || a.data()[i] == 2.0 * x.data()[i]);
  }
}

TEST(Primitives, DropoutRateOutOfRange) {
  Rng rng(1);
  Graph g;
  EXPECT_THROW(dropout(g.constant(Mat::Ones(2, 2)), 1.0, rng, true), NumericsError);
}

TEST(Primitives, ShapeMismatchNamesPrimitiveAndShapes) {
  Graph g;
  try {
    matmul(g.constant(Mat::Ones(2, 3)), g.constant(Mat::Ones(2, 3)));
    FAIL() << "expected a shape error";
  } catch (const NumericsError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(Primitives, NonFiniteInputRejected) {
  Graph g;
  Mat x = Mat::Ones(1, 2);
  x(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(g.constant(x), NumericsError);
  x(0, 1) = std::nan("");
  EXPECT_THROW(g.variable(x), NumericsError);
}

TEST(Primitives, GatherRejectsOutOfRangeIds) {
  Graph g;
  const std::vector<int> ids{0, 5};
  EXPECT_THROW(gather_rows(g.constant(Mat::Ones(3, 2)), ids), NumericsError);
}

// ---- backward

TEST(Backward, SumOfSquares) {
  Graph g;
  Tensor x = g.variable(row({1, 2}));
  g.backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(x.grad()(0, 1), 4.0);
}

TEST(Backward, SigmoidAtZero) {
  Graph g;
  Tensor x = g.variable(row({0}));
  g.backward(sigmoid(x));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 0.25);
}

TEST(Backward, ReluSubgradientAtZeroIsZero) {
  Graph g;
  Tensor x = g.variable(row({0, 1}));
  g.backward(sum(relu(x)));
  EXPECT_EQ(x.grad()(0, 0), 0.0);
  EXPECT_EQ(x.grad()(0, 1), 1.0);
}

TEST(Backward, NonScalarLossRejected) {
  Graph g;
  Tensor x = g.variable(row({1, 2}));
  EXPECT_THROW(g.backward(x), NumericsError);
}

TEST(Backward, GraphIsSingleUse) {
  Graph g;
  Tensor x = g.variable(row({1, 2}));
  Tensor l = sum(x);
  g.backward(l);
  EXPECT_TRUE(g.consumed());
  EXPECT_THROW(g.backward(l), NumericsError);
}

TEST(Backward, ParameterGradientAccumulatesAcrossGraphs) {
  Parameter p("p", row({1, 2}));
  p.zero_grad();
  for (int i = 0; i < 2; ++i) {
    Graph g;
    g.backward(sum(g.parameter(p)));
  }
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 2.0);
}

TEST(Backward, FrozenRowGetsNoGradient) {
  Parameter table("t", Mat::Ones(3, 2), Index{0});
  table.zero_grad();
  Graph g;
  const std::vector<int> ids{0, 1, 0, 2};
  g.backward(sum(gather_rows(g.parameter(table), ids, Index{0})));
  EXPECT_TRUE(table.grad.row(0).isZero(0.0));
  EXPECT_DOUBLE_EQ(table.grad(1, 0), 1.0);
}

TEST(Backward, ReverseOrderMatchesTopology) {
  Graph g;
  Tensor a = g.variable(row({1}));
  Tensor b = scale(a, 2.0);
  Tensor c = add(b, a);
  for (int id = 0; id < static_cast<int>(g.size()); ++id)
    for (int in : g.inputs_of(id)) EXPECT_LT(in, id);
  g.backward(sum(c));
  EXPECT_DOUBLE_EQ(a.grad()(0, 0), 3.0);
}

TEST(Backward, CompositeConvReluSumMatchesFiniteDifferences) {
  Mat k(3, 1);
  k << 0.5, -1.0, 0.25;
  Mat x(3, 1);
  x << 0.7, -0.3, 1.1;
  const double err = finite_diff_check(
      [&](Graph& g, const Tensor& in) { return sum(relu(conv1d(in, g.constant(k), 3))); }, x, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(Backward, BitIdenticalAcrossRuns) {
  auto run = [] {
    Rng rng(9);
    Parameter w("w", random_mat(4, 3, rng));
    w.zero_grad();
    Graph g;
    Rng drop(10);
    const Tensor x = g.constant(random_mat(5, 4, rng));
    const Tensor y = dropout(relu(matmul(x, g.parameter(w))), 0.3, drop, true);
    g.backward(mean(mul(y, y)));
    return std::pair<Mat, Mat>{y.value(), w.grad};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

// ---- finite_diff_check

TEST(FiniteDiff, LinearFunctionIsExact) {
  Rng rng(12);
  const double err = finite_diff_check([](Graph&, const Tensor& x) { return sum(x); }, random_mat(3, 4, rng));
  EXPECT_LT(err, 1e-10);
}

TEST(FiniteDiff, NegativeControlFlagsWrongGradient) {
  Rng rng(13);
  const double err = finite_diff_check(
      [](Graph& g, const Tensor& x) {
        // Forward is x^2 summed, backward claims 3x.
        Tensor sq = g.record("bad_square", {x}, x.value().array().square().matrix(), [](const BackwardContext& c) {
          if (c.input_grads[0]) *c.input_grads[0] += (3.0 * c.inputs[0]->array() * c.output_grad.array()).matrix();
        });
        return sum(sq);
      },
      random_mat(2, 3, rng));
  EXPECT_GT(err, 1e-2);
}

TEST(FiniteDiff, NonDeterministicFunctionRejected) {
  int calls = 0;
  EXPECT_THROW(finite_diff_check(
                   [&](Graph&, const Tensor& x) { return scale(sum(x), 1.0 + 0.1 * (calls++)); }, Mat::Ones(1, 2)),
               NumericsError);
}

TEST(FiniteDiff, RejectsNonPositiveEps) {
  EXPECT_THROW(finite_diff_check([](Graph&, const Tensor& x) { return sum(x); }, Mat::Ones(1, 1), 0.0),
               NumericsError);
}

// Every primitive at 10 random points, relu away from its kink.
TEST(FiniteDiff, EveryPrimitiveAtTenRandomPoints) {
  Rng rng(21);
  using Op = std::function<Tensor(Graph&, const Tensor&)>;
  const Mat other = random_mat(4, 4, rng);
  Mask mask = Mask::Constant(4, 4, true);
  mask(0, 0) = mask(3, 2) = false;
  Mask key_valid = Mask::Constant(4, 1, true);
  key_valid(3, 0) = false;
  const std::vector<int> ids{1, 3, 0, 2};
  const Mat conv_kernel = random_mat(12, 2, rng);
  const std::vector<std::pair<std::string, Op>> ops{
      {"matmul", [&](Graph& g, const Tensor& x) { return matmul(x, g.constant(other)); }},
      {"matmul_nt", [&](Graph& g, const Tensor& x) { return matmul_nt(x, g.constant(other)); }},
      {"add", [&](Graph& g, const Tensor& x) { return add(x, g.constant(other)); }},
      {"sub", [&](Graph& g, const Tensor& x) { return sub(g.constant(other), x); }},
      {"mul", [&](Graph& g, const Tensor& x) { return mul(x, x); }},
      {"scale", [](Graph&, const Tensor& x) { return scale(x, 0.3); }},
      {"add_row", [&](Graph& g, const Tensor& x) { return add_row(x, g.constant(other.row(0))); }},
      {"add_row[bias]", [&](Graph& g, const Tensor& x) { return add_row(g.constant(other), block_sum_rows(x, 4)); }},
      {"mul_col", [&](Graph& g, const Tensor& x) { return mul_col(x, g.constant(other.col(0))); }},
      {"sigmoid", [](Graph&, const Tensor& x) { return sigmoid(x); }},
      {"softplus", [](Graph&, const Tensor& x) { return softplus(x); }},
      {"row_softmax", [](Graph&, const Tensor& x) { return row_softmax(x); }},
      {"masked_row_softmax", [&](Graph&, const Tensor& x) { return masked_row_softmax(x, mask); }},
      {"row_l2_normalize", [](Graph&, const Tensor& x) { return row_l2_normalize(x); }},
      {"row_max", [](Graph&, const Tensor& x) { return row_max(x); }},
      {"block_max_rows", [](Graph&, const Tensor& x) { return block_max_rows(x, 2); }},
      {"block_sum_rows", [](Graph&, const Tensor& x) { return block_sum_rows(x, 2); }},
      {"concat_cols", [&](Graph& g, const Tensor& x) { return concat_cols(x, g.constant(other)); }},
      {"reshape", [](Graph&, const Tensor& x) { return reshape(x, 2, 8); }},
      {"gather_rows", [&](Graph&, const Tensor& x) { return gather_rows(x, ids); }},
      {"conv1d", [&](Graph& g, const Tensor& x) { return conv1d(x, g.constant(conv_kernel), 2); }},
      {"multi_head_attention",
       [&](Graph&, const Tensor& x) { return multi_head_attention(x, x, x, key_valid, 4, 2); }},
      {"sum", [](Graph&, const Tensor& x) { return sum(x); }},
      {"mean", [](Graph&, const Tensor& x) { return mean(x); }},
  };
  for (const auto& [name, op] : ops) {
    double worst = 0.0;
    for (int p = 0; p < 10; ++p) {
      const Mat x = random_mat(4, 4, rng);
      worst = std::max(worst, finite_diff_check(
                                  [&](Graph& g, const Tensor& in) {
                                    const Tensor out = op(g, in);
                                    Rng wr(static_cast<std::uint64_t>(out.rows() * 7 + out.cols()));
                                    return sum(mul(out, g.constant(random_mat(out.rows(), out.cols(), wr))));
                                  },
                                  x));
    }
    EXPECT_LT(worst, 1e-5) << name;
  }
  double relu_worst = 0.0;
  for (int p = 0; p < 10; ++p) {
    Mat x = random_mat(4, 4, rng);
    for (Index i = 0; i < x.size(); ++i)
      if (std::abs(x.data()[i]) < 1e-3) x.data()[i] = 0.5;
    relu_worst = std::max(relu_worst, finite_diff_check([](Graph&, const Tensor& in) { return sum(relu(in)); }, x));
  }
  EXPECT_LT(relu_worst, 1e-5);
}

}  // namespace
}  // namespace deepcat
