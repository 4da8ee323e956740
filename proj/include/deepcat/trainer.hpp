#pragma once

#include "deepcat/adam.hpp"
#include "deepcat/cooccurrence.hpp"
#include "deepcat/loss.hpp"
#include "deepcat/model.hpp"

#include <json.hpp>

#include <functional>
#include <stdexcept>

namespace deepcat {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 64;
  double dropout = 0.5;
  int epochs = 20;
  std::uint64_t seed = 1;
  LossConfig loss;
  Ablation ablation = Ablation::joint_plus_cm;
  /// Sigmoid threshold for the validation F1 used in model selection.
  double threshold = 0.5;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // example-weighted mean of the overall batch loss
  double train_l_pc = 0.0;
  double train_l_cm = 0.0;
  double valid_micro_f1 = 0.0;
  double valid_macro_f1 = 0.0;
};

nlohmann::json epoch_log_to_json(const EpochLog& e);

struct FitResult {
  ModelParams best;
  int best_epoch = 0;
  EpochLog best_log;
  std::vector<EpochLog> log;
};

/// Targets matrix (records x |C|) with ones at each record's categories.
Mat label_matrix(const std::vector<QueryRecord>& records, int num_categories);
/// Concatenated token ids of `records` (must already be encoded).
std::vector<int> flatten_tokens(const std::vector<QueryRecord>& records);

/// Parameters the optimizer updates under `ablation`.
std::vector<Parameter*> trainable_parameters(ModelParams& p, Ablation ablation);

/// Mini-batch Adam training with per-epoch validation; returns the parameters
/// of the epoch with the best validation micro-F1 (earliest on ties).
/// `on_epoch` is called after every epoch; `after_init` may adjust the freshly
/// initialised parameters (pretrained word vectors). Records must be encoded.
FitResult fit(const std::vector<QueryRecord>& train, const std::vector<QueryRecord>& valid,
              const ModelConfig& model_config, const TrainConfig& cfg,
              const std::function<void(const EpochLog&)>& on_epoch = {},
              const std::function<void(ModelParams&)>& after_init = {});

/// Overall loss of one batch, built on `g`. Exposed for gradient checks.
struct BatchLoss {
  Tensor total;
  Tensor l_pc;
  Tensor l_cm;  // undefined unless the co-occurrence loss is active
};
BatchLoss batch_loss(Graph& g, ModelParams& p, std::span<const int> token_ids, const Mat& targets,
                     const Mat& cm_normalized, const TrainConfig& cfg, bool training, Rng* rng);

}  // namespace deepcat
