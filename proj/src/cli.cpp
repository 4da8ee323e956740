#include "deepcat/cli.hpp"

#include "deepcat/baseline.hpp"
#include "deepcat/checkpoint.hpp"
#include "deepcat/corpus_io.hpp"
#include "deepcat/gradient_suite.hpp"
#include "deepcat/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace deepcat::cli {

using nlohmann::json;
namespace fs = std::filesystem;

GeneratorConfig smoke_generator_config() {
  GeneratorConfig g;
  g.num_l1 = 6;
  g.num_leaves = 30;
  g.vocab_size = 500;
  g.num_queries = 4000;
  return g;
}

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Files written by the running command; removed again unless it succeeds.
class Outputs {
 public:
  Outputs() = default;
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    std::error_code ec;
    for (const auto& p : paths_) fs::remove(p, ec);
  }
  void write(const fs::path& p, const std::string& contents) {
    paths_.push_back(p);
    write_file_atomic(p, contents);
  }
  void add(const fs::path& p) { paths_.push_back(p); }
  void commit() { paths_.clear(); }

 private:
  std::vector<fs::path> paths_;
};

struct Options {
  std::string command;
  std::uint64_t seed = 1;

  GeneratorConfig gen;
  bool smoke = false;

  std::string data_dir;
  std::string out_dir;
  std::string checkpoint;
  std::string taxonomy_path;
  std::string input;
  std::string word_vectors;
  std::string output;

  SplitConfig split;
  ModelConfig model;
  TrainConfig train;
  std::string ablation = "joint_plus_cm";
  std::string cm_mode = "shifted";

  std::string eval_split = "test";
  EvalConfig eval;
  int top_k = 5;

  std::vector<double> sweep{0.0, 0.01, 0.1, 1.0};
  bool no_sweep = false;
  bool with_baseline = false;
  BaselineConfig baseline;

  std::vector<std::string> reports;
  GradientSuiteConfig grad;
};

// ---- config echo ---------------------------------------------------------------

json generator_to_json(const GeneratorConfig& g) {
  return {{"num_l1", g.num_l1},
          {"num_leaves", g.num_leaves},
          {"vocab_size", g.vocab_size},
          {"num_queries", g.num_queries},
          {"zipf_exponent", g.zipf_exponent},
          {"correlation_strength", g.correlation_strength},
          {"seed", g.seed}};
}

json model_shape_json(const ModelConfig& m) {
  return {{"embed_dim", m.embed_dim},
          {"seq_len", m.seq_len},
          {"conv_layers", m.conv_layers},
          {"kernel_width", m.kernel_width},
          {"heads", m.heads},
          {"attn_dim", m.attn_dim}};
}

json baseline_config_json(const BaselineConfig& b) {
  return {{"epochs", b.epochs}, {"learning_rate", b.learning_rate}, {"reg", b.reg}, {"seed", b.seed}};
}

std::string eval_split_name(const std::string& s) {
  if (s != "test" && s != "valid") throw UsageError("--split must be test or valid");
  return s;
}

// ---- data ------------------------------------------------------------------------

fs::path corpus_path(const fs::path& dir) { return dir / "corpus.jsonl"; }
fs::path taxonomy_file(const fs::path& dir) { return dir / "taxonomy.jsonl"; }

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw UsageError(what + " not found: " + p.string());
}

void require_data_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("--data is required");
  require_file(corpus_path(dir), "corpus");
  require_file(taxonomy_file(dir), "taxonomy");
}

fs::path prepare_out_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("--out is required");
  fs::create_directories(dir);
  return dir;
}

PreparedData load_prepared(const std::string& dir, const SplitConfig& split) {
  const Taxonomy tax = read_taxonomy(taxonomy_file(dir));
  return prepare_data(read_corpus(corpus_path(dir)), tax, split);
}

/// Resolves the string-valued flags and the single seed into the typed configs.
void resolve(Options& o, const CLI::App& sub) {
  o.split.seed = o.seed;
  o.train.seed = o.seed;
  o.baseline.seed = o.seed;
  o.gen.seed = o.seed;
  o.train.ablation = ablation_from_string(o.ablation);
  o.train.loss.cm_mode = cm_mode_from_string(o.cm_mode);
  if (o.train.ablation != Ablation::joint_plus_cm && sub.get_option_no_throw("--ablation") != nullptr) {
    for (const char* flag : {"--lambda1", "--cm-mode"}) {
      const CLI::Option* opt = sub.get_option_no_throw(flag);
      if (opt != nullptr && opt->count() > 0) {
        throw UsageError(std::string(flag) + " has no effect with --ablation " + o.ablation);
      }
    }
  }
  o.train.validate();
}

json train_echo(const Options& o) {
  json j = {{"seed", o.seed},
            {"data", o.data_dir},
            {"split", split_config_to_json(o.split)},
            {"model", model_shape_json(o.model)},
            {"train", train_config_to_json(o.train)}};
  if (!o.word_vectors.empty()) j["word_vectors"] = o.word_vectors;
  return j;
}

std::function<void(ModelParams&)> word_vector_hook(const Options& o, const Vocabulary& vocab, std::ostream& out) {
  if (o.word_vectors.empty()) return {};
  return [&o, &vocab, &out](ModelParams& p) {
    const int found = load_word_vectors(p, vocab, o.word_vectors);
    out << "loaded " << found << " word vectors\n";
  };
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string relative_change(double now, double before) {
  if (before == 0.0) return "";
  const double pct = 100.0 * (now - before) / before;
  std::ostringstream os;
  os << " (" << (pct >= 0 ? "+" : "") << std::fixed << std::setprecision(1) << pct << "%)";
  return os.str();
}

/// Plain-text table with a left-aligned first column.
std::string render_rows(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) w[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) w[c] = std::max(w[c], r[c].size());
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) os << "  ";
      if (c == 0) os << std::left;
      else os << std::right;
      os << std::setw(static_cast<int>(w[c])) << cells[c];
    }
    os << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (std::size_t c = 0; c < w.size(); ++c) total += w[c] + (c > 0 ? 2 : 0);
  os << std::string(total, '-') << '\n';
  for (const auto& r : rows) line(r);
  return os.str();
}

// ---- commands ------------------------------------------------------------------

int cmd_gen_data(Options& o, const CLI::App& sub, std::ostream& out) {
  const fs::path dir = prepare_out_dir(o.out_dir);
  if (o.smoke) {
    GeneratorConfig s = smoke_generator_config();
    // Explicit flags still win over the preset.
    auto given = [&](const char* f) { return sub.get_option(f)->count() > 0; };
    if (!given("--num-l1")) o.gen.num_l1 = s.num_l1;
    if (!given("--num-leaves")) o.gen.num_leaves = s.num_leaves;
    if (!given("--vocab-size")) o.gen.vocab_size = s.vocab_size;
    if (!given("--num-queries")) o.gen.num_queries = s.num_queries;
  }
  const SyntheticCorpus c = generate_synthetic_corpus(o.gen);
  Outputs outputs;
  outputs.add(corpus_path(dir));
  write_corpus(corpus_path(dir), c.records);
  outputs.add(taxonomy_file(dir));
  write_taxonomy(taxonomy_file(dir), c.taxonomy);
  outputs.write(dir / "gen_config.json",
                json{{"command", "gen-data"}, {"seed", o.seed}, {"generator", generator_to_json(o.gen)}}.dump(2) + "\n");
  std::array<int, 3> per_bucket{};
  for (const auto& r : c.records) ++per_bucket[static_cast<std::size_t>(r.bucket)];
  out << "wrote " << c.records.size() << " queries (" << per_bucket[0] << " tail, " << per_bucket[1] << " torso, "
      << per_bucket[2] << " head), " << c.taxonomy.num_l1() << " L1 / " << c.taxonomy.num_leaves() << " leaves to "
      << dir.string() << "\n";
  outputs.commit();
  return 0;
}

int cmd_train(Options& o, std::ostream& out) {
  require_data_dir(o.data_dir);
  if (!o.word_vectors.empty()) require_file(o.word_vectors, "word vectors");
  const fs::path dir = prepare_out_dir(o.out_dir);
  const PreparedData data = load_prepared(o.data_dir, o.split);
  const ModelConfig mc = model_config_for(data, o.model);
  out << "train " << data.train.size() << " / valid " << data.valid.size() << " / test " << data.test.size()
      << " queries, vocabulary " << mc.vocab_size << ", " << mc.num_categories << " categories\n";

  Outputs outputs;
  std::string log_text;
  const FitResult fit_result = fit(
      data.train, data.valid, mc, o.train,
      [&](const EpochLog& e) {
        log_text += epoch_log_to_json(e).dump() + "\n";
        out << "epoch " << e.epoch << "  loss " << fmt(e.train_loss) << "  valid micro-F1 " << fmt(e.valid_micro_f1)
            << "  macro-F1 " << fmt(e.valid_macro_f1) << "\n";
      },
      word_vector_hook(o, data.vocab, out));

  json meta = {{"command", "train"},
               {"config", train_echo(o)},
               {"best_epoch", fit_result.best_epoch},
               {"best", epoch_log_to_json(fit_result.best_log)}};
  outputs.add(dir / "model.ckpt");
  save_checkpoint(dir / "model.ckpt", fit_result.best, data.vocab, data.taxonomy, meta);
  outputs.write(dir / "train_log.jsonl", log_text);
  outputs.write(dir / "train_config.json", meta.dump(2) + "\n");
  out << "best epoch " << fit_result.best_epoch << " (valid micro-F1 " << fmt(fit_result.best_log.valid_micro_f1)
      << "), checkpoint " << (dir / "model.ckpt").string() << "\n";
  outputs.commit();
  return 0;
}

int cmd_eval(Options& o, const CLI::App& sub, std::ostream& out) {
  require_data_dir(o.data_dir);
  require_file(o.checkpoint, "checkpoint");
  if (o.output.empty()) throw UsageError("--out is required");
  const std::string which = eval_split_name(o.eval_split);
  Checkpoint ck = load_checkpoint(o.checkpoint);
  const json& cfg = ck.meta.at("config");
  // The split is recomputed from the checkpoint's own recorded settings.
  const SplitConfig split = split_config_from_json(cfg.at("split"));
  const TrainConfig tc = train_config_from_json(cfg.at("train"));
  const PreparedData data = load_prepared(o.data_dir, split);
  verify_compatible(ck, data.vocab, data.taxonomy);
  EvalConfig ec = o.eval;
  if (sub.get_option("--threshold")->count() == 0) ec.threshold = tc.threshold;

  const auto& records = which == "test" ? data.test : data.valid;
  const EvalReport rep = evaluate(ck.params, tc.ablation, records, data.class_frequencies, ec);
  const json extra = {{"command", "eval"},
                      {"checkpoint", o.checkpoint},
                      {"split", which},
                      {"data", o.data_dir},
                      {"train_config", cfg}};
  fs::path report_path(o.output);
  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  fs::path csv_path = report_path;
  csv_path.replace_extension(".csv");
  Outputs outputs;
  outputs.write(report_path, report_to_json(rep, extra).dump(2) + "\n");
  outputs.write(csv_path, report_to_csv(rep));
  out << render_report_table({{to_string(tc.ablation).data(), rep}});
  outputs.commit();
  return 0;
}

int cmd_predict(Options& o, std::ostream& out) {
  require_file(o.checkpoint, "checkpoint");
  require_file(o.taxonomy_path, "taxonomy");
  if (!o.input.empty() && o.input != "-") require_file(o.input, "input");
  if (o.top_k < 1) throw UsageError("--top-k must be >= 1");
  Checkpoint ck = load_checkpoint(o.checkpoint);
  const Vocabulary vocab = checkpoint_vocabulary(ck);
  const Taxonomy tax = read_taxonomy(o.taxonomy_path);
  verify_compatible(ck, vocab, tax);
  const Ablation ablation = ablation_from_string(ck.meta.at("config").at("train").at("ablation").get<std::string>());
  const int k = std::min(o.top_k, tax.num_leaves());

  std::ifstream file;
  if (!o.input.empty() && o.input != "-") file.open(o.input);
  std::istream& in = file.is_open() ? static_cast<std::istream&>(file) : std::cin;
  std::string line;
  while (std::getline(in, line)) {
    if (tokenize(line).empty()) continue;
    const auto ids = encode_query(line, vocab, ck.params.config.seq_len);
    const Mat scores = predict_scores(ck.params, ids, ablation);
    const Vec row = scores.row(0).transpose();
    const auto ranked = rank_categories(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    out << line;
    for (int i = 0; i < k; ++i) {
      const int c = ranked[static_cast<std::size_t>(i)];
      out << '\t' << tax.leaf_names[static_cast<std::size_t>(c)] << ':' << fmt(stable_sigmoid(row[c]));
    }
    out << '\n';
  }
  return 0;
}

int cmd_baseline(Options& o, std::ostream& out) {
  require_data_dir(o.data_dir);
  const fs::path dir = prepare_out_dir(o.out_dir);
  const PreparedData data = load_prepared(o.data_dir, o.split);
  const TfidfModel model = train_ovr_linear(data.train, data.taxonomy.num_leaves(), o.baseline);
  EvalReport rep = evaluate_scores(predict_margins(model, data.test), data.test, data.class_frequencies, o.eval);
  rep.flagged_classes = model.flagged_classes;
  const json extra = {{"command", "baseline"},
                      {"split", "test"},
                      {"data", o.data_dir},
                      {"config", {{"seed", o.seed}, {"split", split_config_to_json(o.split)},
                                  {"baseline", baseline_config_json(o.baseline)}}}};
  Outputs outputs;
  outputs.add(dir / "baseline.json");
  save_baseline(dir / "baseline.json", model);
  outputs.write(dir / "baseline_report.json", report_to_json(rep, extra).dump(2) + "\n");
  outputs.write(dir / "baseline_report.csv", report_to_csv(rep));
  out << render_report_table({{"tfidf_ovr", rep}});
  if (!model.flagged_classes.empty()) {
    out << model.flagged_classes.size() << " classes have no training positives\n";
  }
  outputs.commit();
  return 0;
}

int cmd_ablate(Options& o, std::ostream& out) {
  require_data_dir(o.data_dir);
  const fs::path dir = prepare_out_dir(o.out_dir);
  const PreparedData data = load_prepared(o.data_dir, o.split);
  const ModelConfig mc = model_config_for(data, o.model);

  // Runs are cached by their resolved config, so an identical configuration
  // appearing in both tables is trained once.
  std::map<std::string, RunResult> cache;
  auto run_config = [&](const TrainConfig& tc) -> const RunResult& {
    const std::string key = train_config_to_json(tc).dump();
    auto it = cache.find(key);
    if (it == cache.end()) {
      out << "training " << to_string(tc.ablation) << " lambda1=" << tc.loss.lambda1 << "\n";
      it = cache.emplace(key, train_and_evaluate(data, mc, tc, o.eval)).first;
    }
    return it->second;
  };

  json runs = json::array();
  auto record_run = [&](const std::string& label, const TrainConfig& tc, const RunResult& r) {
    json log = json::array();
    for (const auto& e : r.fit.log) log.push_back(epoch_log_to_json(e));
    runs.push_back({{"label", label},
                    {"train", train_config_to_json(tc)},
                    {"best_epoch", r.fit.best_epoch},
                    {"epochs", log},
                    {"valid", report_to_json(r.valid)},
                    {"test", report_to_json(r.test)}});
  };

  const std::array<std::pair<Ablation, const char*>, 3> variants{{{Ablation::word_only, "Word Rep."},
                                                                  {Ablation::joint, "Joint Word-Category Rep."},
                                                                  {Ablation::joint_plus_cm, "Joint Word-Category Rep. + L_CM"}}};
  std::vector<std::vector<std::string>> rows;
  std::optional<std::pair<double, double>> previous;
  const RunResult* joint_run = nullptr;
  for (const auto& [ablation, label] : variants) {
    TrainConfig tc = o.train;
    tc.ablation = ablation;
    const RunResult& r = run_config(tc);
    if (ablation == Ablation::joint) joint_run = &r;
    record_run(label, tc, r);
    const double macro = r.valid.macro_f1, micro = r.valid.micro_f1;
    rows.push_back({label, fmt(macro, 3) + (previous ? relative_change(macro, previous->first) : ""),
                    fmt(micro, 3) + (previous ? relative_change(micro, previous->second) : ""),
                    fmt(r.test.at(5).map, 3)});
    previous = {macro, micro};
  }
  std::string text = "Ablation (validation Macro/Micro-F1, test MAP@5)\n" +
                     render_rows({"Method", "Macro-F1", "Micro-F1", "MAP@5"}, rows);

  json sweep = json::array();
  std::optional<bool> lambda0_matches;
  if (!o.no_sweep) {
    std::vector<std::vector<std::string>> srows;
    for (double l1 : o.sweep) {
      TrainConfig tc = o.train;
      tc.ablation = Ablation::joint_plus_cm;
      tc.loss.lambda1 = l1;
      const RunResult& r = run_config(tc);
      record_run("lambda1=" + fmt(l1, 2), tc, r);
      srows.push_back({fmt(l1, 2), fmt(r.valid.macro_f1, 3), fmt(r.valid.micro_f1, 3), fmt(r.test.at(5).map, 3),
                       fmt(r.fit.best_log.train_l_cm, 4)});
      sweep.push_back({{"lambda1", l1}, {"valid_macro_f1", r.valid.macro_f1}, {"valid_micro_f1", r.valid.micro_f1}});
      if (l1 == 0.0 && joint_run != nullptr) {
        lambda0_matches = report_to_json(r.valid) == report_to_json(joint_run->valid) &&
                          report_to_json(r.test) == report_to_json(joint_run->test);
      }
    }
    text += "\nlambda1 sweep (joint_plus_cm, " + std::string(to_string(o.train.loss.cm_mode)) + ")\n" +
            render_rows({"lambda1", "Macro-F1", "Micro-F1", "MAP@5", "L_CM"}, srows);
    if (lambda0_matches) {
      text += std::string("lambda1=0 reproduces joint: ") + (*lambda0_matches ? "yes" : "NO") + "\n";
    }
  }

  json doc = {{"command", "ablate"}, {"config", train_echo(o)}, {"runs", runs}, {"sweep", sweep}};
  if (lambda0_matches) doc["lambda0_matches_joint"] = *lambda0_matches;

  if (o.with_baseline) {
    const TfidfModel model = train_ovr_linear(data.train, data.taxonomy.num_leaves(), o.baseline);
    EvalReport rep = evaluate_scores(predict_margins(model, data.test), data.test, data.class_frequencies, o.eval);
    rep.flagged_classes = model.flagged_classes;
    doc["baseline"] = {{"config", baseline_config_json(o.baseline)}, {"test", report_to_json(rep)}};
    text += "\nTF-IDF one-vs-rest baseline: test MAP@5 " + fmt(rep.at(5).map, 3) + "\n";
  }

  Outputs outputs;
  outputs.write(dir / "ablation.json", doc.dump(2) + "\n");
  outputs.write(dir / "ablation.txt", text);
  out << text;
  outputs.commit();
  return 0;
}

int cmd_report(Options& o, std::ostream& out) {
  std::vector<std::pair<std::string, EvalReport>> reports;
  for (const auto& path : o.reports) {
    require_file(path, "report");
    std::ifstream in(path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ": " + e.what());
    }
    reports.emplace_back(fs::path(path).stem().string(), report_from_json(j));
  }
  out << render_report_table(reports);
  return 0;
}

int cmd_gradcheck(Options& o, std::ostream& out) {
  const GradientCheckReport rep = gradient_check_suite(o.grad);
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : rep.entries) {
    std::ostringstream err;
    err << std::scientific << std::setprecision(2) << e.max_rel_error;
    rows.push_back({e.component, err.str(), e.passed ? "ok" : "FAIL"});
  }
  out << render_rows({"component", "max rel. error", "status"}, rows);
  out << "tolerance " << rep.tolerance << ", " << fmt(rep.seconds, 2) << " s\n";
  if (!rep.all_passed()) {
    std::string names;
    for (const auto& f : rep.failures()) names += (names.empty() ? "" : ",") + f;
    throw std::runtime_error("gradient check failed for " + names);
  }
  return 0;
}

// ---- flag registration ----------------------------------------------------------

void add_seed(CLI::App* sub, Options& o) {
  sub->add_option("--seed", o.seed, "Seed for every random choice of this command");
}

void add_split(CLI::App* sub, Options& o) {
  sub->add_option("--test-per-bucket", o.split.test_per_bucket, "Test queries sampled per traffic bucket")
      ->check(CLI::PositiveNumber);
  sub->add_option("--valid-fraction", o.split.valid_fraction, "Fraction of the non-test queries held out for validation")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--min-freq", o.split.min_freq, "Minimum training count for a vocabulary token")
      ->check(CLI::PositiveNumber);
}

void add_model(CLI::App* sub, Options& o) {
  sub->add_option("--embed-dim", o.model.embed_dim, "Word/category embedding size V")->check(CLI::PositiveNumber);
  sub->add_option("--conv-layers", o.model.conv_layers, "Convolution + highway layers")->check(CLI::PositiveNumber);
  sub->add_option("--kernel-width", o.model.kernel_width, "Convolution width (odd)")->check(CLI::PositiveNumber);
  sub->add_option("--heads", o.model.heads, "Attention heads")->check(CLI::PositiveNumber);
  sub->add_option("--attn-dim", o.model.attn_dim, "Attention model width")->check(CLI::PositiveNumber);
}

void add_train(CLI::App* sub, Options& o, bool with_ablation) {
  sub->add_option("--lr", o.train.learning_rate, "Adam learning rate");
  sub->add_option("--batch-size", o.train.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  sub->add_option("--dropout", o.train.dropout, "Dropout rate")->check(CLI::Range(0.0, 0.999));
  sub->add_option("--epochs", o.train.epochs, "Training epochs")->check(CLI::PositiveNumber);
  sub->add_option("--lambda1", o.train.loss.lambda1, "Weight of the co-occurrence loss L_CM");
  sub->add_option("--lambda2", o.train.loss.lambda2, "Weight of the classification loss L_pc");
  sub->add_option("--cm-mode", o.cm_mode, "L_CM form: shifted or literal")
      ->check(CLI::IsMember({"shifted", "literal"}));
  sub->add_flag("--positive-term-only", o.train.loss.positive_term_only,
                "Drop the negative-label term of the classification loss");
  sub->add_option("--threshold", o.train.threshold, "Sigmoid decision threshold for F1")
      ->check(CLI::Range(0.0, 1.0));
  if (with_ablation) {
    sub->add_option("--ablation", o.ablation, "Model variant: word_only, joint or joint_plus_cm")
        ->check(CLI::IsMember({"word_only", "joint", "joint_plus_cm"}));
  }
  add_model(sub, o);
}

void add_eval(CLI::App* sub, Options& o, bool with_threshold) {
  sub->add_option("--minority-m", o.eval.minority_m, "Number of least frequent classes in the minority report")
      ->check(CLI::PositiveNumber);
  if (with_threshold) {
    sub->add_option("--threshold", o.eval.threshold, "Sigmoid decision threshold for F1 (default: training value)")
        ->check(CLI::Range(0.0, 1.0));
  }
}

void add_baseline(CLI::App* sub, Options& o) {
  sub->add_option("--baseline-epochs", o.baseline.epochs, "Baseline SGD epochs")->check(CLI::PositiveNumber);
  sub->add_option("--baseline-lr", o.baseline.learning_rate, "Baseline SGD learning rate");
  sub->add_option("--baseline-reg", o.baseline.reg, "Baseline L2 regularisation");
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"DeepCAT query categorisation: data generation, training, evaluation and ablations", "deepcat"};
  app.set_config("--config", "", "TOML file with flag values; command-line flags take precedence");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus and taxonomy");
  gen->add_option("--out", o.out_dir, "Output directory")->required();
  gen->add_option("--num-l1", o.gen.num_l1, "Top-level groups")->check(CLI::PositiveNumber);
  gen->add_option("--num-leaves", o.gen.num_leaves, "Leaf categories")->check(CLI::PositiveNumber);
  gen->add_option("--vocab-size", o.gen.vocab_size, "Distinct pseudo-words")->check(CLI::PositiveNumber);
  gen->add_option("--num-queries", o.gen.num_queries, "Distinct queries")->check(CLI::PositiveNumber);
  gen->add_option("--zipf", o.gen.zipf_exponent, "Zipf exponent of leaf popularity");
  gen->add_option("--correlation", o.gen.correlation_strength, "Probability an extra label is a sibling")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_flag("--smoke", o.smoke, "Small preset for quick checks");
  add_seed(gen, o);

  CLI::App* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--data", o.data_dir, "Directory from gen-data")->required();
  train->add_option("--out", o.out_dir, "Output directory")->required();
  train->add_option("--word-vectors", o.word_vectors, "Plain-text 'token v1 ... vV' initial word vectors");
  add_train(train, o, true);
  add_split(train, o);
  add_seed(train, o);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on its test or validation split");
  eval->add_option("--data", o.data_dir, "Directory from gen-data")->required();
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint from train")->required();
  eval->add_option("--out", o.output, "Report path (.json; a .csv companion is written beside it)")->required();
  eval->add_option("--split", o.eval_split, "test or valid")->check(CLI::IsMember({"test", "valid"}));
  add_eval(eval, o, true);

  CLI::App* predict = app.add_subcommand("predict", "Print the top-K categories for each input query");
  predict->add_option("--checkpoint", o.checkpoint, "Checkpoint from train")->required();
  predict->add_option("--taxonomy", o.taxonomy_path, "taxonomy.jsonl the model was trained with")->required();
  predict->add_option("--input", o.input, "File with one query per line (default: standard input)");
  predict->add_option("--top-k", o.top_k, "Categories printed per query");

  CLI::App* ablate = app.add_subcommand("ablate", "Train the three model variants and a lambda1 sweep");
  ablate->add_option("--data", o.data_dir, "Directory from gen-data")->required();
  ablate->add_option("--out", o.out_dir, "Output directory")->required();
  ablate->add_option("--sweep", o.sweep, "lambda1 values for the sweep")->delimiter(',');
  ablate->add_flag("--no-sweep", o.no_sweep, "Skip the lambda1 sweep");
  ablate->add_flag("--with-baseline", o.with_baseline, "Also train the TF-IDF baseline");
  add_train(ablate, o, false);
  add_split(ablate, o);
  add_eval(ablate, o, false);
  add_baseline(ablate, o);
  add_seed(ablate, o);

  CLI::App* baseline = app.add_subcommand("baseline", "Train and evaluate the TF-IDF one-vs-rest baseline");
  baseline->add_option("--data", o.data_dir, "Directory from gen-data")->required();
  baseline->add_option("--out", o.out_dir, "Output directory")->required();
  add_baseline(baseline, o);
  add_split(baseline, o);
  add_eval(baseline, o, true);
  add_seed(baseline, o);

  CLI::App* report = app.add_subcommand("report", "Render evaluation reports as an aligned table");
  report->add_option("reports", o.reports, "Report JSON files")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gradcheck->add_option("--points", o.grad.points, "Random points per primitive")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tolerance", o.grad.tolerance, "Maximum relative error");
  gradcheck->add_option("--inject-bug", o.grad.inject_bug, "Corrupt one component's gradient (negative control)");
  gradcheck->add_option("--seed", o.grad.seed, "Seed for the random check points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  o.command = sub->get_name();
  try {
    resolve(o, *sub);
    if (sub == gen) return cmd_gen_data(o, *sub, out);
    if (sub == train) return cmd_train(o, out);
    if (sub == eval) return cmd_eval(o, *sub, out);
    if (sub == predict) return cmd_predict(o, out);
    if (sub == ablate) return cmd_ablate(o, out);
    if (sub == baseline) return cmd_baseline(o, out);
    if (sub == report) return cmd_report(o, out);
    return cmd_gradcheck(o, out);
  } catch (const UsageError& e) {
    err << "error: " << o.command << ": " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << o.command << ": " << one_line(e.what()) << "\n";
    return 1;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"deepcat"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace deepcat::cli
