#include "deepcat/cooccurrence.hpp"
#include "deepcat/corpus.hpp"
#include "deepcat/corpus_io.hpp"
#include "deepcat/vocabulary.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace deepcat {
namespace {

namespace fs = std::filesystem;

GeneratorConfig small_config(std::uint64_t seed = 3) {
  GeneratorConfig g;
  g.num_l1 = 5;
  g.num_leaves = 20;
  g.vocab_size = 300;
  g.num_queries = 1500;
  g.seed = seed;
  return g;
}

QueryRecord rec(std::string text, std::vector<int> cats, std::int64_t freq = 1) {
  QueryRecord r;
  r.raw_text = std::move(text);
  r.categories = std::move(cats);
  r.frequency = freq;
  r.bucket = assign_bucket(freq);
  return r;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("deepcat_test_" + name);
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

// ---- taxonomy

TEST(Taxonomy, ValidateRejectsBadParent) {
  Taxonomy t{{"a", "b"}, {"x", "y"}, {0, 2}};
  EXPECT_THROW(t.validate(), DataError);
  t.parent = {0};
  EXPECT_THROW(t.validate(), DataError);
  t.parent = {1, 0};
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(t.children(1), std::vector<int>{0});
}

TEST(Taxonomy, HashDependsOnContent) {
  Taxonomy a{{"a"}, {"x", "y"}, {0, 0}};
  Taxonomy b = a;
  EXPECT_EQ(a.hash(), b.hash());
  b.leaf_names[1] = "z";
  EXPECT_NE(a.hash(), b.hash());
}

// ---- generator

TEST(Generator, SameSeedIdenticalCorpus) {
  const auto a = generate_synthetic_corpus(small_config());
  const auto b = generate_synthetic_corpus(small_config());
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].raw_text, b.records[i].raw_text);
    EXPECT_EQ(a.records[i].categories, b.records[i].categories);
    EXPECT_EQ(a.records[i].frequency, b.records[i].frequency);
  }
  EXPECT_EQ(a.taxonomy.hash(), b.taxonomy.hash());
  const auto c = generate_synthetic_corpus(small_config(4));
  EXPECT_NE(a.records[0].raw_text + a.records[1].raw_text, c.records[0].raw_text + c.records[1].raw_text);
}

TEST(Generator, RecordsAreWellFormed) {
  const auto c = generate_synthetic_corpus(small_config());
  c.taxonomy.validate();
  EXPECT_EQ(c.records.size(), 1500u);
  std::set<std::string> texts;
  for (const auto& r : c.records) {
    ASSERT_FALSE(r.categories.empty());
    ASSERT_LE(r.categories.size(), 4u);
    EXPECT_TRUE(std::is_sorted(r.categories.begin(), r.categories.end()));
    EXPECT_EQ(std::set<int>(r.categories.begin(), r.categories.end()).size(), r.categories.size());
    for (int x : r.categories) ASSERT_LT(x, 20);
    EXPECT_EQ(r.bucket, assign_bucket(r.frequency));
    const auto toks = tokenize(r.raw_text);
    EXPECT_GE(toks.size(), 2u);
    EXPECT_LE(toks.size(), static_cast<std::size_t>(kMaxQueryLength));
    std::string lower;
    for (const auto& t : toks) lower += t + " ";
    EXPECT_TRUE(texts.insert(lower).second) << r.raw_text;
  }
}

TEST(Generator, ZipfTopTenCoverage) {
  GeneratorConfig g;
  g.zipf_exponent = 1.2;
  g.num_queries = 5000;
  const auto c = generate_synthetic_corpus(g);
  std::vector<std::int64_t> hist(200, 0);
  std::int64_t total = 0;
  for (const auto& r : c.records)
    for (int x : r.categories) {
      ++hist[x];
      ++total;
    }
  std::sort(hist.rbegin(), hist.rend());
  std::int64_t top = 0;
  for (int i = 0; i < 10; ++i) top += hist[i];
  EXPECT_GT(static_cast<double>(top) / total, 0.30);
}

TEST(Generator, ZipfWeightsNormalized) {
  const auto w = zipf_weights(50, 1.1);
  double s = 0;
  for (double x : w) s += x;
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_NEAR(w[0] / w[1], std::pow(2.0, 1.1), 1e-12);
}

double shared_parent_fraction(const std::vector<std::vector<int>>& sets, const Taxonomy& t) {
  int multi = 0, shared = 0;
  for (const auto& s : sets) {
    if (s.size() < 2) continue;
    ++multi;
    std::set<int> parents;
    for (int x : s) parents.insert(t.parent[x]);
    shared += parents.size() < s.size();
  }
  return static_cast<double>(shared) / multi;
}

TEST(Generator, NoCorrelationMatchesChanceBaseline) {
  GeneratorConfig g = small_config(11);
  g.num_leaves = 60;
  g.num_l1 = 10;
  g.vocab_size = 800;
  g.num_queries = 6000;
  g.correlation_strength = 0.0;
  const auto c = generate_synthetic_corpus(g);
  std::vector<std::vector<int>> observed;
  std::vector<double> marginal(60, 0.0);
  for (const auto& r : c.records) {
    observed.push_back(r.categories);
    for (int x : r.categories) marginal[x] += 1.0;
  }
  // Monte Carlo: same label-count profile, leaves drawn independently from
  // the empirical marginal.
  Rng rng(99);
  double total = 0;
  for (double m : marginal) total += m;
  auto draw = [&] {
    double u = rng.uniform() * total;
    for (int i = 0; i < 60; ++i) {
      u -= marginal[i];
      if (u < 0) return i;
    }
    return 59;
  };
  std::vector<std::vector<int>> simulated;
  for (int rep = 0; rep < 5; ++rep)
    for (const auto& s : observed) {
      std::vector<int> sim;
      while (sim.size() < s.size()) {
        const int x = draw();
        if (!oracle::has(sim, x)) sim.push_back(x);
      }
      simulated.push_back(sim);
    }
  const double obs = shared_parent_fraction(observed, c.taxonomy);
  const double chance = shared_parent_fraction(simulated, c.taxonomy);
  EXPECT_NEAR(obs, chance, 0.05);

  g.correlation_strength = 0.7;
  const auto corr = generate_synthetic_corpus(g);
  std::vector<std::vector<int>> corr_sets;
  for (const auto& r : corr.records) corr_sets.push_back(r.categories);
  EXPECT_GT(shared_parent_fraction(corr_sets, corr.taxonomy), chance + 0.2);
}

TEST(Generator, RejectsBadConfig) {
  GeneratorConfig g = small_config();
  g.correlation_strength = 1.5;
  EXPECT_THROW(generate_synthetic_corpus(g), DataError);
  g = small_config();
  g.vocab_size = 30;
  EXPECT_THROW(generate_synthetic_corpus(g), DataError);
  g = small_config();
  g.num_leaves = 3;
  EXPECT_THROW(generate_synthetic_corpus(g), DataError);
}

// ---- buckets and splits

TEST(Buckets, Boundaries) {
  EXPECT_EQ(assign_bucket(1), Bucket::tail);
  EXPECT_EQ(assign_bucket(2), Bucket::torso);
  EXPECT_EQ(assign_bucket(100), Bucket::torso);
  EXPECT_EQ(assign_bucket(101), Bucket::head);
  EXPECT_THROW(assign_bucket(0), DataError);
  EXPECT_EQ(bucket_from_string(to_string(Bucket::torso)), Bucket::torso);
}

TEST(Buckets, PartitionTheCorpus) {
  const auto c = generate_synthetic_corpus(small_config());
  std::vector<std::int64_t> f;
  for (const auto& r : c.records) f.push_back(r.frequency);
  const auto b = assign_buckets(f);
  ASSERT_EQ(b.size(), f.size());
  std::array<int, 3> n{};
  for (auto x : b) ++n[static_cast<int>(x)];
  EXPECT_EQ(n[0] + n[1] + n[2], static_cast<int>(f.size()));
  for (int i = 0; i < 3; ++i) EXPECT_GT(n[i], 0);
}

TEST(StratifiedSample, ExactlyPerBucketAndDisjoint) {
  const auto c = generate_synthetic_corpus(small_config());
  const Split s = stratified_test_sample(c.records, 20, 5);
  ASSERT_EQ(s.held_out.size(), 60u);
  EXPECT_EQ(s.rest.size(), c.records.size() - 60);
  std::array<int, 3> n{};
  std::set<std::string> test;
  for (const auto& r : s.held_out) {
    ++n[static_cast<int>(r.bucket)];
    test.insert(r.raw_text);
  }
  EXPECT_EQ(n, (std::array<int, 3>{20, 20, 20}));
  for (const auto& r : s.rest) EXPECT_EQ(test.count(r.raw_text), 0u);

  const Split again = stratified_test_sample(c.records, 20, 5);
  for (std::size_t i = 0; i < s.held_out.size(); ++i) EXPECT_EQ(s.held_out[i].raw_text, again.held_out[i].raw_text);
}

TEST(StratifiedSample, TooFewInBucketThrows) {
  std::vector<QueryRecord> rs{rec("a b", {0}, 1), rec("c d", {0}, 5), rec("e f", {0}, 500)};
  EXPECT_NO_THROW(stratified_test_sample(rs, 1, 1));
  EXPECT_THROW(stratified_test_sample(rs, 2, 1), DataError);
}

TEST(ValidationSplit, FractionAndDeterminism) {
  const auto c = generate_synthetic_corpus(small_config());
  const Split a = validation_split(c.records, 0.25, 8);
  EXPECT_EQ(a.held_out.size() + a.rest.size(), c.records.size());
  EXPECT_NEAR(static_cast<double>(a.held_out.size()) / c.records.size(), 0.25, 0.01);
  const Split b = validation_split(c.records, 0.25, 8);
  for (std::size_t i = 0; i < a.held_out.size(); ++i) EXPECT_EQ(a.held_out[i].raw_text, b.held_out[i].raw_text);
}

// ---- vocabulary

TEST(Vocabulary, TokenizeLowercasesAndSplits) {
  EXPECT_EQ(tokenize("Motion Activated  kitchen, faucet!"),
            (std::vector<std::string>{"motion", "activated", "kitchen", "faucet"}));
  EXPECT_TRUE(tokenize("  ,. ").empty());
}

TEST(Vocabulary, EncodePadsToTen) {
  std::vector<QueryRecord> rs{rec("motion activated kitchen faucet", {0}), rec("motion kitchen", {0})};
  const Vocabulary v = build_vocab(rs, 1);
  const auto ids = encode_query("Motion Activated  kitchen faucet", v);
  ASSERT_EQ(ids.size(), 10u);
  for (int i = 0; i < 4; ++i) EXPECT_GT(ids[i], Vocabulary::kUnk);
  for (int i = 4; i < 10; ++i) EXPECT_EQ(ids[i], Vocabulary::kPad);
  EXPECT_EQ(encode_query("zebra", v)[0], Vocabulary::kUnk);
  EXPECT_THROW(encode_query(" ! ", v), DataError);
}

TEST(Vocabulary, TruncatesLongQuery) {
  std::string text;
  for (int i = 0; i < 12; ++i) text += "w" + std::to_string(i) + " ";
  std::vector<QueryRecord> rs{rec(text, {0})};
  const Vocabulary v = build_vocab(rs, 1);
  const auto ids = encode_query(text, v);
  ASSERT_EQ(ids.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(v.token(ids[i]), "w" + std::to_string(i));
}

TEST(Vocabulary, MinFreqAndOrdering) {
  std::vector<QueryRecord> rs{rec("b a", {0}), rec("a c", {0}), rec("b a", {0}), rec("d", {0})};
  const Vocabulary v = build_vocab(rs, 2);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{v.token(0), v.token(1), "a", "b"}));
  EXPECT_EQ(v.id("c"), Vocabulary::kUnk);
  const Vocabulary rebuilt(v.tokens());
  EXPECT_EQ(rebuilt.hash(), v.hash());
}

// ---- co-occurrence

TEST(Cooccurrence, SinglePair) {
  const auto c = build_category_cooccurrence({rec("x", {0, 1})}, 3);
  EXPECT_EQ(c(0, 1), 1);
  EXPECT_EQ(c(1, 0), 1);
  EXPECT_EQ(c(0, 0), 1);
  EXPECT_EQ(c(1, 1), 1);
  EXPECT_EQ(c(0, 2), 0);
  EXPECT_EQ(c(2, 2), 0);
}

TEST(Cooccurrence, ThreeQueries) {
  const auto c = build_category_cooccurrence({rec("x", {0, 1}), rec("y", {0}), rec("z", {0, 1, 2})}, 3);
  EXPECT_EQ(c(0, 0), 3);
  EXPECT_EQ(c(0, 1), 2);
  EXPECT_EQ(c(1, 2), 1);
  EXPECT_EQ(c(2, 1), 1);
}

TEST(Cooccurrence, MatchesBruteForceOracle) {
  const auto corpus = generate_synthetic_corpus(small_config(21));
  const std::vector<QueryRecord> first(corpus.records.begin(), corpus.records.begin() + 1000);
  const auto got = build_category_cooccurrence(first, 20);
  EXPECT_TRUE(got == oracle::cooccurrence(first, 20));
}

TEST(Cosine, HandExamples) {
  CountMatrix a(2, 2);
  a << 4, 2, 2, 1;
  EXPECT_TRUE(cosine_normalize(a).isApprox(Mat::Ones(2, 2)));
  a << 9, 3, 3, 4;
  EXPECT_DOUBLE_EQ(cosine_normalize(a)(0, 1), 0.5);
  a << 5, 0, 0, 7;
  EXPECT_EQ(cosine_normalize(a), Mat::Identity(2, 2));
}

TEST(Cosine, RejectsAsymmetricOrNegative) {
  CountMatrix a(2, 2);
  a << 4, 2, 1, 1;
  EXPECT_THROW(cosine_normalize(a), DataError);
  a << 4, -1, -1, 1;
  EXPECT_THROW(cosine_normalize(a), DataError);
}

TEST(Cosine, PropertiesOnGeneratedCorpus) {
  const auto corpus = generate_synthetic_corpus(small_config(5));
  const auto cm = build_cooc_matrix(corpus.records, 20);
  EXPECT_EQ(cm.normalized, cm.normalized.transpose());
  for (Index i = 0; i < 20; ++i) {
    if (cm.counts(i, i) > 0) EXPECT_DOUBLE_EQ(cm.normalized(i, i), 1.0);
    for (Index j = 0; j < 20; ++j) {
      EXPECT_GE(cm.normalized(i, j), 0.0);
      EXPECT_LE(cm.normalized(i, j), 1.0);
    }
  }
  const Mat o = oracle::cosine(cm.counts);
  EXPECT_LE((o - cm.normalized).cwiseAbs().maxCoeff(), 1e-12);
}

// ---- files

TEST(CorpusIo, RoundTrip) {
  const auto dir = temp_dir("corpus_io");
  const auto c = generate_synthetic_corpus(small_config());
  write_corpus(dir / "c.jsonl", c.records);
  write_taxonomy(dir / "t.jsonl", c.taxonomy);
  const auto back = read_corpus(dir / "c.jsonl");
  ASSERT_EQ(back.size(), c.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].raw_text, c.records[i].raw_text);
    EXPECT_EQ(back[i].categories, c.records[i].categories);
    EXPECT_EQ(back[i].frequency, c.records[i].frequency);
    EXPECT_EQ(back[i].bucket, c.records[i].bucket);
  }
  EXPECT_EQ(read_taxonomy(dir / "t.jsonl").hash(), c.taxonomy.hash());
  write_corpus(dir / "c2.jsonl", back);
  EXPECT_EQ(slurp(dir / "c.jsonl"), slurp(dir / "c2.jsonl"));
}

TEST(CorpusIo, RejectsMalformed) {
  const auto dir = temp_dir("corpus_bad");
  {
    std::ofstream(dir / "nohdr.jsonl") << "{\"text\":\"a\"}\n";
    std::ofstream(dir / "broken.jsonl") << "not json\n";
  }
  EXPECT_THROW(read_corpus(dir / "nohdr.jsonl"), DataError);
  EXPECT_THROW(read_corpus(dir / "broken.jsonl"), DataError);
  EXPECT_THROW(read_corpus(dir / "missing.jsonl"), DataError);
}

}  // namespace
}  // namespace deepcat
