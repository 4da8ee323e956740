#include "deepcat/baseline.hpp"
#include "deepcat/rng.hpp"
#include "deepcat/vocabulary.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

namespace deepcat {
namespace {

QueryRecord rec(std::string text, std::vector<int> cats) {
  QueryRecord r;
  r.raw_text = std::move(text);
  r.categories = std::move(cats);
  return r;
}

TfidfModel idf_model(const std::vector<QueryRecord>& train) {
  TfidfModel m;
  fit_idf(m, train);
  return m;
}

TEST(Tfidf, IdfFormula) {
  const auto m = idf_model({rec("a b", {0}), rec("a c", {0}), rec("a a", {0})});
  EXPECT_NEAR(m.idf[m.term_index.at("a")], std::log(4.0 / 4.0) + 1.0, 1e-15);
  EXPECT_NEAR(m.idf[m.term_index.at("b")], std::log(4.0 / 2.0) + 1.0, 1e-15);
  for (double x : m.idf) EXPECT_GE(x, 0.0);
}

TEST(Tfidf, Examples) {
  const auto m = idf_model({rec("a b", {0}), rec("c d", {0})});
  const auto oov = tfidf_vectorize({"zzz"}, m);
  EXPECT_TRUE(oov.index.empty());

  const auto single = tfidf_vectorize({"a"}, m);
  ASSERT_EQ(single.index.size(), 1u);
  EXPECT_DOUBLE_EQ(single.value[0], 1.0);

  const auto pair = tfidf_vectorize({"a", "c"}, m);
  ASSERT_EQ(pair.index.size(), 2u);
  EXPECT_NEAR(pair.value[0], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(pair.value[1], 1.0 / std::sqrt(2.0), 1e-15);

  const auto with_oov = tfidf_vectorize({"a", "zzz"}, m);
  ASSERT_EQ(with_oov.index.size(), 1u);
  EXPECT_DOUBLE_EQ(with_oov.value[0], 1.0);

  EXPECT_THROW(tfidf_vectorize({}, m), std::invalid_argument);
}

TEST(Tfidf, IdfDependsOnTrainingOnly) {
  const std::vector<QueryRecord> train{rec("red hammer", {0}), rec("blue saw", {1}), rec("red saw", {1})};
  const auto a = train_ovr_linear(train, 2);
  // Scoring unseen queries must not touch idf or weights.
  const Mat scores = predict_margins(a, std::vector<QueryRecord>{rec("green hammer drill", {0})});
  const auto b = train_ovr_linear(train, 2);
  EXPECT_EQ(a.idf, b.idf);
  EXPECT_EQ(a.terms, b.terms);
  EXPECT_EQ(scores.rows(), 1);
  EXPECT_EQ(a.term_index.count("green"), 0u);
}

TEST(Linear, SeparableFixtureReachesZeroHinge) {
  std::vector<QueryRecord> train;
  for (int i = 0; i < 10; ++i) {
    train.push_back(rec("alpha", {0}));
    train.push_back(rec("beta", {1}));
  }
  BaselineConfig cfg;
  cfg.reg = 0.0;
  cfg.epochs = 50;
  const auto m = train_ovr_linear(train, 2, cfg);
  std::vector<SparseVec> xs;
  std::vector<int> ys;
  for (const auto& r : train) {
    xs.push_back(tfidf_vectorize(tokenize(r.raw_text), m));
    ys.push_back(r.categories[0] == 0 ? 1 : -1);
  }
  EXPECT_EQ(hinge_objective(m.weights.row(0).transpose(), m.bias[0], xs, ys, 0.0), 0.0);
  EXPECT_TRUE(m.flagged_classes.empty());
}

TEST(Linear, ZeroWeightsGiveBias) {
  auto m = idf_model({rec("a b", {0})});
  m.weights = Mat::Zero(3, static_cast<Index>(m.terms.size()));
  m.bias = Vec(3);
  m.bias << 0.5, -1.0, 2.0;
  EXPECT_EQ(predict_margins(m, tfidf_vectorize({"a", "b"}, m)), m.bias);
}

TEST(Linear, FlagsClassesWithoutPositives) {
  const auto m = train_ovr_linear({rec("a b", {0}), rec("c", {2})}, 3);
  EXPECT_EQ(m.flagged_classes, std::vector<int>{1});
  EXPECT_EQ(m.weights.rows(), 3);
  EXPECT_EQ(m.weights.cols(), static_cast<Index>(m.terms.size()));
}

TEST(Linear, SeededRerunIdentical) {
  const std::vector<QueryRecord> train{rec("a b", {0}), rec("b c", {1}), rec("c d", {0, 1}), rec("d e", {2})};
  const auto a = train_ovr_linear(train, 3);
  const auto b = train_ovr_linear(train, 3);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(Linear, HingeSubgradientMatchesFiniteDifferences) {
  Rng rng(6);
  const int dim = 6;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SparseVec> xs;
    std::vector<int> ys;
    for (int i = 0; i < 8; ++i) {
      SparseVec x;
      for (int j = 0; j < dim; ++j)
        if (rng.bernoulli(0.5)) {
          x.index.push_back(j);
          x.value.push_back(rng.uniform(-1, 1));
        }
      xs.push_back(x);
      ys.push_back(rng.bernoulli(0.5) ? 1 : -1);
    }
    Vec w(dim);
    for (int j = 0; j < dim; ++j) w[j] = rng.uniform(-1, 1);
    const double b = rng.uniform(-0.5, 0.5);
    bool near_hinge = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double m = b;
      for (std::size_t j = 0; j < xs[i].index.size(); ++j) m += w[xs[i].index[j]] * xs[i].value[j];
      near_hinge = near_hinge || std::abs(ys[i] * m - 1.0) <= 1e-3;
    }
    if (near_hinge) continue;

    const double reg = 0.01, eps = 1e-6;
    const auto [gw, gb] = hinge_subgradient(w, b, xs, ys, reg);
    for (int j = 0; j < dim; ++j) {
      Vec wp = w, wm = w;
      wp[j] += eps;
      wm[j] -= eps;
      const double fd = (hinge_objective(wp, b, xs, ys, reg) - hinge_objective(wm, b, xs, ys, reg)) / (2 * eps);
      EXPECT_LT(std::abs(fd - gw[j]) / std::max(1.0, std::abs(gw[j])), 1e-5);
    }
    const double fdb = (hinge_objective(w, b + eps, xs, ys, reg) - hinge_objective(w, b - eps, xs, ys, reg)) / (2 * eps);
    EXPECT_LT(std::abs(fdb - gb) / std::max(1.0, std::abs(gb)), 1e-5);
  }
}

TEST(Linear, SaveLoadRoundTrip) {
  const auto m = train_ovr_linear({rec("a b", {0}), rec("b c", {1}), rec("c d", {0})}, 3);
  const auto path = std::filesystem::temp_directory_path() / "deepcat_test_baseline.json";
  save_baseline(path, m);
  const auto back = load_baseline(path);
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.bias, m.bias);
  EXPECT_EQ(back.idf, m.idf);
  EXPECT_EQ(back.terms, m.terms);
  EXPECT_EQ(back.flagged_classes, m.flagged_classes);
  EXPECT_EQ(predict_margins(back, tfidf_vectorize({"b"}, back)), predict_margins(m, tfidf_vectorize({"b"}, m)));
}

TEST(Linear, ConfigValidation) {
  BaselineConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(train_ovr_linear({}, 2), std::invalid_argument);
}

}  // namespace
}  // namespace deepcat
