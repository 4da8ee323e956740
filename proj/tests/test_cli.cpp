#include "deepcat/cli.hpp"

#include <json.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace deepcat {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("deepcat_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool one_error_line(const std::string& err) {
  return err.rfind("error: ", 0) == 0 && err.find('\n') == err.size() - 1;
}

const std::vector<std::string> kSmallModel{"--embed-dim", "16", "--attn-dim", "8", "--heads", "2",
                                           "--batch-size", "64", "--test-per-bucket", "50"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// One smoke corpus and trained checkpoint shared by the slower tests.
const fs::path& trained_dir() {
  static const fs::path dir = [] {
    const fs::path d = temp_dir("trained");
    EXPECT_EQ(run({"gen-data", "--smoke", "--seed", "3", "--out", (d / "data").string()}).code, 0);
    const auto r = run(with({"train", "--data", (d / "data").string(), "--out", (d / "run").string(), "--epochs", "2"},
                            kSmallModel));
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

TEST(Cli, GenDataIsDeterministic) {
  const auto d = temp_dir("gen");
  ASSERT_EQ(run({"gen-data", "--smoke", "--seed", "7", "--out", (d / "a").string()}).code, 0);
  ASSERT_EQ(run({"gen-data", "--smoke", "--seed", "7", "--out", (d / "b").string()}).code, 0);
  for (const char* f : {"corpus.jsonl", "taxonomy.jsonl", "gen_config.json"}) {
    ASSERT_TRUE(fs::exists(d / "a" / f)) << f;
    EXPECT_EQ(slurp(d / "a" / f), slurp(d / "b" / f)) << f;
  }
  ASSERT_EQ(run({"gen-data", "--smoke", "--seed", "8", "--out", (d / "c").string()}).code, 0);
  EXPECT_NE(slurp(d / "a" / "corpus.jsonl"), slurp(d / "c" / "corpus.jsonl"));
  const json cfg = json::parse(slurp(d / "a" / "gen_config.json"));
  EXPECT_EQ(cfg.at("seed"), 7);
  EXPECT_EQ(cfg.at("generator").at("num_leaves"), 30);
}

TEST(Cli, UsageErrorsAreOneLine) {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"frobnicate"}, {"gen-data"}, {"train", "--data", "x"}, {"train", "--bogus"}}) {
    const auto r = run(args);
    EXPECT_EQ(r.code, 2);
    EXPECT_TRUE(one_error_line(r.err)) << r.err;
  }
}

TEST(Cli, ConflictingFlagsRejected) {
  const auto d = temp_dir("conflict");
  const auto r = run({"train", "--data", d.string(), "--out", (d / "o").string(), "--ablation", "joint",
                      "--lambda1", "0.5"});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(one_error_line(r.err)) << r.err;
  EXPECT_NE(r.err.find("lambda1"), std::string::npos);
}

TEST(Cli, MissingInputsFailCleanly) {
  const auto d = temp_dir("missing");
  const auto r = run({"train", "--data", (d / "nope").string(), "--out", (d / "o").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(one_error_line(r.err)) << r.err;
  EXPECT_FALSE(fs::exists(d / "o" / "model.ckpt"));
  const auto p = run({"predict", "--checkpoint", (d / "none.ckpt").string(), "--taxonomy", (d / "t").string()});
  EXPECT_NE(p.code, 0);
  EXPECT_TRUE(one_error_line(p.err)) << p.err;
}

TEST(Cli, HelpListsFlagsWithDefaults) {
  const auto r = run({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* flag : {"--lambda1", "--lambda2", "--cm-mode", "--threshold", "--lr", "--batch-size", "--dropout",
                           "--epochs", "--ablation", "--seed", "--positive-term-only", "--embed-dim", "--heads",
                           "--test-per-bucket", "--valid-fraction", "--min-freq"})
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  for (const char* def : {"0.1", "shifted", "0.5", "0.001", "64", "joint_plus_cm"})
    EXPECT_NE(r.out.find(def), std::string::npos) << def;

  EXPECT_NE(run({"--help"}).out.find("--config"), std::string::npos);

  for (const char* sub : {"gen-data", "eval", "predict", "ablate", "baseline", "report", "gradcheck"}) {
    const auto h = run({sub, "--help"});
    EXPECT_EQ(h.code, 0) << sub;
    EXPECT_NE(h.out.find("--"), std::string::npos) << sub;
  }
  const auto ab = run({"ablate", "--help"});
  for (const char* flag : {"--sweep", "--lambda1", "--cm-mode", "--threshold", "--with-baseline"})
    EXPECT_NE(ab.out.find(flag), std::string::npos) << flag;
}

TEST(Cli, ConfigFileSitsBetweenFlagsAndDefaults) {
  const auto& base = trained_dir();
  const auto d = temp_dir("config");
  std::ofstream(d / "cfg.toml") << "[train]\nepochs = 1\nlr = 0.002\ndropout = 0.3\n";
  const auto r = run(with({"--config", (d / "cfg.toml").string(), "train", "--data", (base / "data").string(),
                           "--out", (d / "run").string(), "--lr", "0.003"},
                          kSmallModel));
  ASSERT_EQ(r.code, 0) << r.err;
  const json cfg = json::parse(slurp(d / "run" / "train_config.json")).at("config").at("train");
  EXPECT_EQ(cfg.at("epochs"), 1);
  EXPECT_EQ(cfg.at("learning_rate"), 0.003);
  EXPECT_EQ(cfg.at("dropout"), 0.3);
  EXPECT_EQ(cfg.at("lambda1"), 0.1);
}

TEST(Cli, TrainWritesArtifactsWithConfigEcho) {
  const auto& d = trained_dir();
  for (const char* f : {"model.ckpt", "train_log.jsonl", "train_config.json"}) EXPECT_TRUE(fs::exists(d / "run" / f)) << f;
  const json meta = json::parse(slurp(d / "run" / "train_config.json"));
  EXPECT_EQ(meta.at("config").at("seed"), 1);
  EXPECT_EQ(meta.at("config").at("split").at("test_per_bucket"), 50);
  EXPECT_EQ(meta.at("config").at("model").at("embed_dim"), 16);
  std::ifstream log(d / "run" / "train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  EXPECT_EQ(lines, 2);
}

TEST(Cli, EvalWritesJsonAndCsv) {
  const auto& d = trained_dir();
  const auto r = run({"eval", "--data", (d / "data").string(), "--checkpoint", (d / "run" / "model.ckpt").string(),
                      "--out", (d / "eval" / "report.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(slurp(d / "eval" / "report.json"));
  EXPECT_EQ(rep.at("num_queries"), 150);
  EXPECT_EQ(rep.at("split"), "test");
  EXPECT_TRUE(rep.contains("train_config"));
  EXPECT_TRUE(fs::exists(d / "eval" / "report.csv"));

  const auto again = run({"eval", "--data", (d / "data").string(), "--checkpoint",
                          (d / "run" / "model.ckpt").string(), "--out", (d / "eval" / "report2.json").string()});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(d / "eval" / "report.csv"), slurp(d / "eval" / "report2.csv"));

  const auto table = run({"report", (d / "eval" / "report.json").string(), (d / "eval" / "report2.json").string()});
  EXPECT_EQ(table.code, 0) << table.err;
  EXPECT_NE(table.out.find("MAP@5"), std::string::npos);
}

TEST(Cli, PredictPrintsRankedCategories) {
  const auto& d = trained_dir();
  std::ofstream(d / "queries.txt") << "motion activated kitchen faucet\n\n";
  const auto r = run({"predict", "--checkpoint", (d / "run" / "model.ckpt").string(), "--taxonomy",
                      (d / "data" / "taxonomy.jsonl").string(), "--input", (d / "queries.txt").string(), "--top-k",
                      "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  ASSERT_TRUE(std::getline(lines, line));
  std::vector<std::string> fields;
  std::istringstream cells(line);
  for (std::string c; std::getline(cells, c, '\t');) fields.push_back(c);
  ASSERT_EQ(fields.size(), 4u);
  EXPECT_EQ(fields[0], "motion activated kitchen faucet");
  double prev = 2.0;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto colon = fields[i].rfind(':');
    ASSERT_NE(colon, std::string::npos);
    const double score = std::stod(fields[i].substr(colon + 1));
    EXPECT_GT(score, 0.0);
    EXPECT_LT(score, 1.0);
    EXPECT_LE(score, prev);
    prev = score;
  }
  EXPECT_FALSE(std::getline(lines, line));
}

TEST(Cli, BaselineWritesReport) {
  const auto& d = trained_dir();
  const auto r = run({"baseline", "--data", (d / "data").string(), "--out", (d / "base").string(), "--test-per-bucket",
                      "50"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"baseline.json", "baseline_report.json", "baseline_report.csv"})
    EXPECT_TRUE(fs::exists(d / "base" / f)) << f;
}

TEST(Cli, GradcheckCommand) {
  EXPECT_EQ(run({"gradcheck", "--points", "2"}).code, 0);
  const auto bad = run({"gradcheck", "--points", "2", "--inject-bug", "sigmoid"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_TRUE(one_error_line(bad.err)) << bad.err;
}

}  // namespace
}  // namespace deepcat
