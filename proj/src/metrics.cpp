#include "deepcat/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace deepcat {

std::vector<int> rank_categories(std::span<const double> scores) {
  std::vector<int> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  return ids;
}

RankingMetrics ranking_metrics_at_k(std::span<const int> ranked, std::span<const int> relevant, int k) {
  if (k < 1) throw std::invalid_argument("ranking_metrics_at_k: K must be >= 1");
  if (relevant.empty()) throw std::invalid_argument("ranking_metrics_at_k: relevant set is empty");
  const auto is_relevant = [&](int c) { return std::find(relevant.begin(), relevant.end(), c) != relevant.end(); };
  const int depth = std::min<int>(k, static_cast<int>(ranked.size()));
  int hits = 0;
  double ap_sum = 0.0;
  for (int i = 0; i < depth; ++i) {
    if (!is_relevant(ranked[static_cast<std::size_t>(i)])) continue;
    ++hits;
    ap_sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  RankingMetrics m;
  m.precision = static_cast<double>(hits) / k;
  m.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
  m.f1 = hits == 0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.average_precision = ap_sum / std::min<double>(k, static_cast<double>(relevant.size()));
  return m;
}

double ClassCounts::f1() const {
  const auto denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

F1Summary macro_micro_f1(const Mat& scores, const std::vector<std::vector<int>>& gold, double threshold) {
  if (static_cast<std::size_t>(scores.rows()) != gold.size()) {
    throw std::invalid_argument("macro_micro_f1: score rows do not match gold size");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("macro_micro_f1: threshold must lie in (0, 1)");
  const Index n_cls = scores.cols();
  F1Summary out;
  out.per_class.assign(static_cast<std::size_t>(n_cls), {});
  std::vector<char> truth(static_cast<std::size_t>(n_cls));
  for (Index q = 0; q < scores.rows(); ++q) {
    std::fill(truth.begin(), truth.end(), 0);
    for (int c : gold[static_cast<std::size_t>(q)]) truth[static_cast<std::size_t>(c)] = 1;
    for (Index c = 0; c < n_cls; ++c) {
      const bool predicted = stable_sigmoid(scores(q, c)) >= threshold;
      auto& cc = out.per_class[static_cast<std::size_t>(c)];
      if (predicted && truth[static_cast<std::size_t>(c)]) ++cc.tp;
      else if (predicted) ++cc.fp;
      else if (truth[static_cast<std::size_t>(c)]) ++cc.fn;
    }
  }
  ClassCounts pooled;
  double f1_sum = 0.0;
  for (Index c = 0; c < n_cls; ++c) {
    const auto& cc = out.per_class[static_cast<std::size_t>(c)];
    pooled.tp += cc.tp;
    pooled.fp += cc.fp;
    pooled.fn += cc.fn;
    if (cc.tp + cc.fn > 0) {
      out.evaluated_classes.push_back(static_cast<int>(c));
      f1_sum += cc.f1();
    }
  }
  out.macro_f1 = out.evaluated_classes.empty() ? 0.0 : f1_sum / static_cast<double>(out.evaluated_classes.size());
  out.micro_f1 = pooled.f1();
  return out;
}

std::array<std::optional<double>, 3> bucket_report(const Mat& scores, const std::vector<std::vector<int>>& gold,
                                                   std::span<const Bucket> buckets, int k) {
  if (buckets.size() != gold.size() || static_cast<std::size_t>(scores.rows()) != gold.size()) {
    throw std::invalid_argument("bucket_report: scores, gold and buckets differ in length");
  }
  std::array<double, 3> sum{};
  std::array<int, 3> count{};
  for (Index q = 0; q < scores.rows(); ++q) {
    const RowVec row = scores.row(q);
    const auto ranked = rank_categories(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    const auto b = static_cast<std::size_t>(buckets[static_cast<std::size_t>(q)]);
    sum[b] += ranking_metrics_at_k(ranked, gold[static_cast<std::size_t>(q)], k).f1;
    ++count[b];
  }
  std::array<std::optional<double>, 3> out;
  for (std::size_t b = 0; b < 3; ++b)
    if (count[b] > 0) out[b] = sum[b] / count[b];
  return out;
}

std::vector<int> minority_classes(const F1Summary& summary, std::span<const std::int64_t> class_frequencies, int m) {
  std::vector<int> classes = summary.evaluated_classes;
  std::stable_sort(classes.begin(), classes.end(), [&](int a, int b) {
    return class_frequencies[static_cast<std::size_t>(a)] < class_frequencies[static_cast<std::size_t>(b)];
  });
  if (m < static_cast<int>(classes.size())) classes.resize(static_cast<std::size_t>(std::max(m, 0)));
  return classes;
}

double minority_report(const Mat& scores, const std::vector<std::vector<int>>& gold,
                       std::span<const std::int64_t> class_frequencies, int m, double threshold) {
  if (static_cast<Index>(class_frequencies.size()) != scores.cols()) {
    throw std::invalid_argument("minority_report: class_frequencies size does not match category count");
  }
  if (m > scores.cols()) throw std::invalid_argument("minority_report: m exceeds number of classes");
  const auto summary = macro_micro_f1(scores, gold, threshold);
  const auto classes = minority_classes(summary, class_frequencies, m);
  if (classes.empty()) return 0.0;
  double total = 0.0;
  for (int c : classes) total += summary.per_class[static_cast<std::size_t>(c)].f1();
  return total / static_cast<double>(classes.size());
}

}  // namespace deepcat
