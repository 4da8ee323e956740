#pragma once

#include "deepcat/report.hpp"
#include "deepcat/taxonomy.hpp"
#include "deepcat/trainer.hpp"
#include "deepcat/vocabulary.hpp"

#include <json.hpp>

namespace deepcat {

/// How a corpus is cut into train / validation / test.
struct SplitConfig {
  int test_per_bucket = 200;
  double valid_fraction = 0.25;
  int min_freq = 2;
  std::uint64_t seed = 1;
};

nlohmann::json split_config_to_json(const SplitConfig& c);
SplitConfig split_config_from_json(const nlohmann::json& j);

struct PreparedData {
  Taxonomy taxonomy;
  Vocabulary vocab;
  std::vector<QueryRecord> train;
  std::vector<QueryRecord> valid;
  std::vector<QueryRecord> test;
  /// Per-class counts over the training split.
  std::vector<std::int64_t> class_frequencies;
};

/// Stratified test sample, random validation split of the rest, vocabulary
/// from the training split only, all splits encoded.
PreparedData prepare_data(const std::vector<QueryRecord>& corpus, const Taxonomy& taxonomy, const SplitConfig& cfg);

/// Model shape for `data` with the remaining fields from `base`.
ModelConfig model_config_for(const PreparedData& data, ModelConfig base = {});

struct RunResult {
  FitResult fit;
  EvalReport valid;
  EvalReport test;
};

RunResult train_and_evaluate(const PreparedData& data, const ModelConfig& model, const TrainConfig& train,
                             const EvalConfig& eval = {}, const std::function<void(const EpochLog&)>& on_epoch = {},
                             const std::function<void(ModelParams&)>& after_init = {});

}  // namespace deepcat
