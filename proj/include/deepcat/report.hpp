#pragma once

#include "deepcat/metrics.hpp"
#include "deepcat/model.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace deepcat {

constexpr int kReportSchemaVersion = 1;

struct EvalConfig {
  double threshold = 0.5;
  int minority_m = 8;
  std::vector<int> ks{1, 3, 5};
};

struct AtK {
  int k = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double map = 0.0;
};

struct EvalReport {
  std::vector<AtK> at_k;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  std::array<std::optional<double>, 3> bucket_f1_at3;
  double minority_macro_f1 = 0.0;
  std::vector<int> minority_classes;
  std::size_t num_queries = 0;
  /// Classes with no training positives (baseline only).
  std::vector<int> flagged_classes;
  EvalConfig config;

  const AtK& at(int k) const;
};

/// Assembles every metric from a score matrix (queries x |C|). `records`
/// supplies gold labels and buckets; class frequencies come from training.
EvalReport evaluate_scores(const Mat& scores, const std::vector<QueryRecord>& records,
                           std::span<const std::int64_t> class_frequencies, const EvalConfig& cfg = {});

/// Inference-mode forward over encoded `records`, then evaluate_scores.
EvalReport evaluate(ModelParams& params, Ablation ablation, const std::vector<QueryRecord>& records,
                    std::span<const std::int64_t> class_frequencies, const EvalConfig& cfg = {});

/// `extra` is merged into the document (config echo, seeds, paths).
nlohmann::json report_to_json(const EvalReport& r, const nlohmann::json& extra = nlohmann::json::object());
EvalReport report_from_json(const nlohmann::json& j);
/// Flat metric,value lines.
std::string report_to_csv(const EvalReport& r);
/// Aligned plain-text table of one or more named reports, one column each.
std::string render_report_table(const std::vector<std::pair<std::string, EvalReport>>& reports);

}  // namespace deepcat
