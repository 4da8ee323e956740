#pragma once

#include "deepcat/corpus.hpp"
#include "deepcat/kernels.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace deepcat {

struct SparseVec {
  std::vector<int> index;
  std::vector<double> value;
};

struct BaselineConfig {
  int epochs = 10;
  double learning_rate = 0.1;
  double reg = 1e-4;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TfidfModel {
  /// Training tokens in first-seen order; feature i is terms[i].
  std::vector<std::string> terms;
  std::unordered_map<std::string, int> term_index;
  std::vector<double> idf;
  Mat weights;  // |C| x |terms|
  Vec bias;     // |C|
  /// Classes without a single training positive.
  std::vector<int> flagged_classes;
  BaselineConfig config;

  int num_classes() const { return static_cast<int>(weights.rows()); }
};

/// idf = ln((1 + N) / (1 + df)) + 1 over the training queries.
void fit_idf(TfidfModel& model, const std::vector<QueryRecord>& train);

/// tf = count / query length, times idf, then L2-normalised. Tokens outside
/// the training vocabulary contribute nothing. Throws on an empty list.
SparseVec tfidf_vectorize(const std::vector<std::string>& tokens, const TfidfModel& model);

/// One-vs-rest hinge-loss SGD per class (seeded, independent per class).
TfidfModel train_ovr_linear(const std::vector<QueryRecord>& train, int num_classes, const BaselineConfig& cfg = {});

/// Raw margins for one vector.
Vec predict_margins(const TfidfModel& model, const SparseVec& x);
/// queries x |C| margins for raw query texts.
Mat predict_margins(const TfidfModel& model, const std::vector<QueryRecord>& records);

/// reg/2 |w|^2 + mean_i max(0, 1 - y_i (w.x_i + b)), y in {-1, +1}.
double hinge_objective(const Vec& w, double b, const std::vector<SparseVec>& xs, const std::vector<int>& ys,
                       double reg);
/// Subgradient of hinge_objective; at the hinge point the zero branch is taken.
std::pair<Vec, double> hinge_subgradient(const Vec& w, double b, const std::vector<SparseVec>& xs,
                                         const std::vector<int>& ys, double reg);

nlohmann::json baseline_to_json(const TfidfModel& model);
TfidfModel baseline_from_json(const nlohmann::json& j);
void save_baseline(const std::filesystem::path& path, const TfidfModel& model);
TfidfModel load_baseline(const std::filesystem::path& path);

}  // namespace deepcat
