#pragma once

#include "deepcat/corpus.hpp"
#include "deepcat/kernels.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace deepcat {

/// Category ids by descending score, ties broken by ascending id.
std::vector<int> rank_categories(std::span<const double> scores);

struct RankingMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// AP@K normalized by min(K, |relevant|).
  double average_precision = 0.0;
};

/// Throws std::invalid_argument for K < 1 or an empty relevant set.
RankingMetrics ranking_metrics_at_k(std::span<const int> ranked, std::span<const int> relevant, int k);

struct ClassCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double f1() const;
};

struct F1Summary {
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  std::vector<ClassCounts> per_class;
  /// Classes that appear in the gold labels of the split; only these enter
  /// the macro average.
  std::vector<int> evaluated_classes;
};

/// Multi-label decisions are sigmoid(score) >= threshold. scores is
/// queries x |C|; gold[q] lists the relevant ids of query q.
F1Summary macro_micro_f1(const Mat& scores, const std::vector<std::vector<int>>& gold, double threshold = 0.5);

/// Mean per-query F1@3 within each bucket (indexed by Bucket); nullopt for
/// a bucket with no queries.
std::array<std::optional<double>, 3> bucket_report(const Mat& scores, const std::vector<std::vector<int>>& gold,
                                                   std::span<const Bucket> buckets, int k = 3);

/// The m least frequent classes (by training frequency, ties by id) among
/// those evaluated in `summary`.
std::vector<int> minority_classes(const F1Summary& summary, std::span<const std::int64_t> class_frequencies, int m);

/// Macro F1 over minority_classes(...).
double minority_report(const Mat& scores, const std::vector<std::vector<int>>& gold,
                       std::span<const std::int64_t> class_frequencies, int m, double threshold = 0.5);

}  // namespace deepcat
