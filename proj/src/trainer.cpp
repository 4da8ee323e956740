#include "deepcat/trainer.hpp"

#include "deepcat/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace deepcat {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must lie in (0, 1)");
  loss.validate();
}

json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"dropout", c.dropout},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"lambda1", c.loss.lambda1},
          {"lambda2", c.loss.lambda2},
          {"cm_mode", to_string(c.loss.cm_mode)},
          {"positive_term_only", c.loss.positive_term_only},
          {"ablation", to_string(c.ablation)},
          {"threshold", c.threshold}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.loss.lambda1 = j.at("lambda1").get<double>();
  c.loss.lambda2 = j.at("lambda2").get<double>();
  c.loss.cm_mode = cm_mode_from_string(j.at("cm_mode").get<std::string>());
  c.loss.positive_term_only = j.value("positive_term_only", false);
  c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
  c.threshold = j.value("threshold", 0.5);
  return c;
}

json epoch_log_to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"train_l_pc", e.train_l_pc},
          {"train_l_cm", e.train_l_cm},
          {"valid_micro_f1", e.valid_micro_f1},
          {"valid_macro_f1", e.valid_macro_f1}};
}

Mat label_matrix(const std::vector<QueryRecord>& records, int num_categories) {
  Mat t = Mat::Zero(static_cast<Index>(records.size()), num_categories);
  for (std::size_t i = 0; i < records.size(); ++i)
    for (int c : records[i].categories) t(static_cast<Index>(i), c) = 1.0;
  return t;
}

std::vector<int> flatten_tokens(const std::vector<QueryRecord>& records) {
  std::vector<int> ids;
  ids.reserve(records.size() * kMaxQueryLength);
  for (const auto& r : records) {
    if (r.tokens.empty()) throw TrainingError("record '" + r.raw_text + "' is not encoded");
    ids.insert(ids.end(), r.tokens.begin(), r.tokens.end());
  }
  return ids;
}

std::vector<Parameter*> trainable_parameters(ModelParams& p, Ablation ablation) {
  auto all = p.all();
  if (ablation != Ablation::word_only) return all;
  const auto skip = p.joint_only();
  std::erase_if(all, [&](Parameter* x) { return std::find(skip.begin(), skip.end(), x) != skip.end(); });
  return all;
}

BatchLoss batch_loss(Graph& g, ModelParams& p, std::span<const int> token_ids, const Mat& targets,
                     const Mat& cm_normalized, const TrainConfig& cfg, bool training, Rng* rng) {
  ForwardOptions opt;
  opt.ablation = cfg.ablation;
  opt.training = training;
  opt.dropout = cfg.dropout;
  opt.rng = rng;
  const auto out = forward(g, p, token_ids, opt);
  BatchLoss bl;
  bl.l_pc = scale(sigmoid_cross_entropy(out.logits, targets, cfg.loss.positive_term_only),
                  1.0 / static_cast<double>(targets.rows()));
  if (cfg.ablation == Ablation::joint_plus_cm && cfg.loss.lambda1 != 0.0) {
    bl.l_cm = matrix_approx_loss(estimate_category_cm(g.parameter(p.cat_emb)), cm_normalized, cfg.loss.cm_mode);
  }
  LossConfig lc = cfg.loss;
  if (!bl.l_cm.valid()) lc.lambda1 = 0.0;
  if (lc.lambda1 + lc.lambda2 == 0.0) throw TrainingError("no active loss term");
  bl.total = overall_loss(bl.l_pc, bl.l_cm, lc);
  return bl;
}

FitResult fit(const std::vector<QueryRecord>& train, const std::vector<QueryRecord>& valid,
              const ModelConfig& model_config, const TrainConfig& cfg,
              const std::function<void(const EpochLog&)>& on_epoch,
              const std::function<void(ModelParams&)>& after_init) {
  cfg.validate();
  if (train.empty()) throw TrainingError("fit: empty training split");
  if (valid.empty()) throw TrainingError("fit: empty validation split");

  const int n_cls = model_config.num_categories;
  const int n = model_config.seq_len;
  const Rng root(cfg.seed);
  Rng init_rng = root.split(1);
  ModelParams params = init_params(model_config, init_rng);
  if (after_init) after_init(params);
  auto trainable = trainable_parameters(params, cfg.ablation);
  AdamState adam = make_adam_state(trainable);

  const Mat cm = cosine_normalize(build_category_cooccurrence(train, n_cls));
  const std::vector<int> train_tokens = flatten_tokens(train);
  const Mat train_targets = label_matrix(train, n_cls);
  const std::vector<int> valid_tokens = flatten_tokens(valid);
  std::vector<std::vector<int>> valid_gold;
  for (const auto& r : valid) valid_gold.push_back(r.categories);

  FitResult result;
  bool have_best = false;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> batch_tokens;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = root.split(2).split(static_cast<std::uint64_t>(epoch));
    Rng dropout_rng = root.split(3).split(static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());

    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      batch_tokens.clear();
      Mat targets(static_cast<Index>(count), n_cls);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t ex = order[start + i];
        batch_tokens.insert(batch_tokens.end(), train_tokens.begin() + static_cast<std::ptrdiff_t>(ex * n),
                            train_tokens.begin() + static_cast<std::ptrdiff_t>((ex + 1) * n));
        targets.row(static_cast<Index>(i)) = train_targets.row(static_cast<Index>(ex));
      }

      for (Parameter* p : trainable) p->zero_grad();
      try {
        Graph g;
        const BatchLoss bl = batch_loss(g, params, batch_tokens, targets, cm, cfg, true, &dropout_rng);
        g.backward(bl.total);
        const double w = static_cast<double>(count);
        log.train_loss += w * bl.total.item();
        log.train_l_pc += w * bl.l_pc.item();
        if (bl.l_cm.valid()) log.train_l_cm += w * bl.l_cm.item();
        adam_step(trainable, adam, cfg.learning_rate);
      } catch (const NumericsError& e) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", example offset " +
                            std::to_string(start) + ": " + e.what());
      }
    }
    const double total = static_cast<double>(order.size());
    log.train_loss /= total;
    log.train_l_pc /= total;
    log.train_l_cm /= total;

    const Mat scores = predict_scores(params, valid_tokens, cfg.ablation);
    const F1Summary f1 = macro_micro_f1(scores, valid_gold, cfg.threshold);
    log.valid_micro_f1 = f1.micro_f1;
    log.valid_macro_f1 = f1.macro_f1;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (!have_best || log.valid_micro_f1 > result.best_log.valid_micro_f1) {
      have_best = true;
      result.best = params;
      result.best_epoch = epoch;
      result.best_log = log;
    }
  }
  return result;
}

}  // namespace deepcat
