#include "deepcat/pipeline.hpp"

namespace deepcat {

using nlohmann::json;

json split_config_to_json(const SplitConfig& c) {
  return {{"test_per_bucket", c.test_per_bucket},
          {"valid_fraction", c.valid_fraction},
          {"min_freq", c.min_freq},
          {"seed", c.seed}};
}

SplitConfig split_config_from_json(const json& j) {
  SplitConfig c;
  c.test_per_bucket = j.at("test_per_bucket").get<int>();
  c.valid_fraction = j.at("valid_fraction").get<double>();
  c.min_freq = j.at("min_freq").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

PreparedData prepare_data(const std::vector<QueryRecord>& corpus, const Taxonomy& taxonomy, const SplitConfig& cfg) {
  taxonomy.validate();
  const Rng root(cfg.seed);
  const Split test = stratified_test_sample(corpus, cfg.test_per_bucket, root.split(1).next_u64());
  const Split valid = validation_split(test.rest, cfg.valid_fraction, root.split(2).next_u64());

  PreparedData d;
  d.taxonomy = taxonomy;
  d.train = valid.rest;
  d.valid = valid.held_out;
  d.test = test.held_out;
  d.vocab = build_vocab(d.train, cfg.min_freq);
  encode_records(d.train, d.vocab);
  encode_records(d.valid, d.vocab);
  encode_records(d.test, d.vocab);
  d.class_frequencies = class_frequencies(d.train, taxonomy.num_leaves());
  return d;
}

ModelConfig model_config_for(const PreparedData& data, ModelConfig base) {
  base.vocab_size = static_cast<int>(data.vocab.tokens().size());
  base.num_categories = data.taxonomy.num_leaves();
  base.validate();
  return base;
}

RunResult train_and_evaluate(const PreparedData& data, const ModelConfig& model, const TrainConfig& train,
                             const EvalConfig& eval, const std::function<void(const EpochLog&)>& on_epoch,
                             const std::function<void(ModelParams&)>& after_init) {
  RunResult r;
  r.fit = fit(data.train, data.valid, model, train, on_epoch, after_init);
  EvalConfig ec = eval;
  ec.threshold = train.threshold;
  r.valid = evaluate(r.fit.best, train.ablation, data.valid, data.class_frequencies, ec);
  r.test = evaluate(r.fit.best, train.ablation, data.test, data.class_frequencies, ec);
  return r;
}

}  // namespace deepcat
