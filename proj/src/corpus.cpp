#include "deepcat/corpus.hpp"

#include "deepcat/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace deepcat {

std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::tail: return "tail";
    case Bucket::torso: return "torso";
    case Bucket::head: return "head";
  }
  return "?";
}

Bucket bucket_from_string(std::string_view s) {
  if (s == "tail") return Bucket::tail;
  if (s == "torso") return Bucket::torso;
  if (s == "head") return Bucket::head;
  throw DataError("unknown bucket '" + std::string(s) + "'");
}

Bucket assign_bucket(std::int64_t frequency) {
  if (frequency < 1) throw DataError("query frequency must be >= 1, got " + std::to_string(frequency));
  if (frequency == 1) return Bucket::tail;
  if (frequency <= 100) return Bucket::torso;
  return Bucket::head;
}

std::vector<Bucket> assign_buckets(std::span<const std::int64_t> frequencies) {
  std::vector<Bucket> out;
  out.reserve(frequencies.size());
  for (std::int64_t f : frequencies) out.push_back(assign_bucket(f));
  return out;
}

std::vector<double> zipf_weights(int n, double exponent) {
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    w[static_cast<std::size_t>(r)] = std::pow(static_cast<double>(r + 1), -exponent);
    total += w[static_cast<std::size_t>(r)];
  }
  for (double& x : w) x /= total;
  return w;
}

namespace {

/// Sampler over a fixed discrete distribution.
class Discrete {
 public:
  Discrete() = default;
  explicit Discrete(const std::vector<double>& weights) : cdf_(weights.size()) {
    std::partial_sum(weights.begin(), weights.end(), cdf_.begin());
  }
  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

std::string make_word(std::size_t code, int width) {
  const std::size_t base = kConsonants.size() * kVowels.size();
  std::string w;
  for (int i = 0; i < width; ++i) {
    const std::size_t digit = code % base;
    code /= base;
    w += kConsonants[digit / kVowels.size()];
    w += kVowels[digit % kVowels.size()];
  }
  return w;
}

std::vector<std::string> make_words(int count, Rng rng) {
  const std::size_t base = kConsonants.size() * kVowels.size();
  int width = 2;
  while (std::pow(static_cast<double>(base), width) < 4.0 * count) ++width;
  const auto space = static_cast<std::size_t>(std::pow(static_cast<double>(base), width));
  std::unordered_set<std::size_t> used;
  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(words.size()) < count) {
    const std::size_t code = rng.below(space);
    if (used.insert(code).second) words.push_back(make_word(code, width));
  }
  return words;
}

std::int64_t draw_frequency(Rng& rng) {
  // Pareto tail with P(f >= k) = k^-0.8.
  const double u = 1.0 - rng.uniform();
  const double f = std::floor(std::pow(u, -1.0 / 0.8));
  return static_cast<std::int64_t>(std::min(f, 1e6));
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const GeneratorConfig& cfg) {
  if (cfg.num_l1 <= 0 || cfg.num_leaves <= 0 || cfg.vocab_size <= 0 || cfg.num_queries <= 0) {
    throw DataError("generator: all counts must be positive");
  }
  if (cfg.num_leaves < cfg.num_l1) throw DataError("generator: need at least one leaf per L1 node");
  if (!(cfg.zipf_exponent > 0.0)) throw DataError("generator: zipf_exponent must be > 0");
  if (!(cfg.correlation_strength >= 0.0 && cfg.correlation_strength <= 1.0)) {
    throw DataError("generator: correlation_strength must lie in [0, 1]");
  }

  const int common_n = std::max(2, cfg.vocab_size / 20);
  const int group_per_l1 = (cfg.vocab_size / 4) / cfg.num_l1;
  const int leaf_per = (cfg.vocab_size - common_n - group_per_l1 * cfg.num_l1) / cfg.num_leaves;
  if (group_per_l1 < 1 || leaf_per < 2) {
    throw DataError("generator: vocab_size " + std::to_string(cfg.vocab_size) + " too small for " +
                    std::to_string(cfg.num_leaves) + " distinct leaves across " + std::to_string(cfg.num_l1) +
                    " L1 groups");
  }

  const Rng root(cfg.seed);
  SyntheticCorpus out;
  Taxonomy& tax = out.taxonomy;

  // Taxonomy: one leaf per L1 first, the rest placed uniformly.
  {
    Rng rng = root.split(1);
    const auto names = make_words(cfg.num_l1 + cfg.num_leaves, root.split(2));
    for (int i = 0; i < cfg.num_l1; ++i) tax.l1_names.push_back(names[static_cast<std::size_t>(i)]);
    for (int i = 0; i < cfg.num_leaves; ++i) {
      const int parent = i < cfg.num_l1 ? i : static_cast<int>(rng.below(static_cast<std::size_t>(cfg.num_l1)));
      tax.parent.push_back(parent);
      tax.leaf_names.push_back(tax.l1_names[static_cast<std::size_t>(parent)] + "/" +
                               names[static_cast<std::size_t>(cfg.num_l1 + i)]);
    }
  }

  // Leaf popularity: Zipf over a random rank order.
  std::vector<double> popularity(static_cast<std::size_t>(cfg.num_leaves));
  {
    Rng rng = root.split(3);
    std::vector<int> order(static_cast<std::size_t>(cfg.num_leaves));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    const auto w = zipf_weights(cfg.num_leaves, cfg.zipf_exponent);
    for (std::size_t r = 0; r < order.size(); ++r) popularity[static_cast<std::size_t>(order[r])] = w[r];
  }
  const Discrete pick_leaf(popularity);

  // Token pools.
  const auto words = make_words(cfg.vocab_size, root.split(4));
  std::vector<int> token_order(static_cast<std::size_t>(cfg.vocab_size));
  std::iota(token_order.begin(), token_order.end(), 0);
  {
    Rng rng = root.split(5);
    rng.shuffle(token_order.begin(), token_order.end());
  }
  std::size_t next_token = 0;
  auto take = [&](int n) {
    std::vector<int> pool(token_order.begin() + static_cast<std::ptrdiff_t>(next_token),
                          token_order.begin() + static_cast<std::ptrdiff_t>(next_token + static_cast<std::size_t>(n)));
    next_token += static_cast<std::size_t>(n);
    return pool;
  };
  const std::vector<int> common_pool = take(common_n);
  std::vector<std::vector<int>> group_pool;
  for (int g = 0; g < cfg.num_l1; ++g) group_pool.push_back(take(group_per_l1));
  std::vector<std::vector<int>> leaf_pool;
  for (int c = 0; c < cfg.num_leaves; ++c) leaf_pool.push_back(take(leaf_per));
  const Discrete pick_common(zipf_weights(common_n, 1.0));
  const Discrete pick_group(zipf_weights(group_per_l1, 1.0));
  const Discrete pick_leaf_token(zipf_weights(leaf_per, 1.0));
  const Discrete pick_label_count(std::vector<double>(std::begin(kLabelCountProbs), std::end(kLabelCountProbs)));

  std::vector<std::vector<int>> siblings(static_cast<std::size_t>(cfg.num_l1));
  for (int g = 0; g < cfg.num_l1; ++g) siblings[static_cast<std::size_t>(g)] = tax.children(g);

  Rng rng = root.split(6);
  std::unordered_set<std::string> seen;
  const std::int64_t max_attempts = 50LL * cfg.num_queries + 1000;
  std::int64_t attempts = 0;
  while (static_cast<int>(out.records.size()) < cfg.num_queries) {
    if (++attempts > max_attempts) {
      throw DataError("generator: could not produce " + std::to_string(cfg.num_queries) +
                      " distinct queries; increase vocab_size");
    }
    QueryRecord rec;
    rec.frequency = draw_frequency(rng);
    rec.bucket = assign_bucket(rec.frequency);

    const int k = static_cast<int>(pick_label_count(rng)) + 1;
    std::vector<int> labels{static_cast<int>(pick_leaf(rng))};
    for (int tries = 0; static_cast<int>(labels.size()) < k && tries < 100; ++tries) {
      int cand = -1;
      if (rng.bernoulli(cfg.correlation_strength)) {
        const int anchor = labels[rng.below(labels.size())];
        std::vector<double> w;
        std::vector<int> options;
        for (int s : siblings[static_cast<std::size_t>(tax.parent[static_cast<std::size_t>(anchor)])]) {
          if (std::find(labels.begin(), labels.end(), s) != labels.end()) continue;
          options.push_back(s);
          w.push_back(popularity[static_cast<std::size_t>(s)]);
        }
        if (!options.empty()) cand = options[Discrete(w)(rng)];
      } else {
        cand = static_cast<int>(pick_leaf(rng));
      }
      if (cand >= 0 && std::find(labels.begin(), labels.end(), cand) == labels.end()) labels.push_back(cand);
    }

    int length = 2 + static_cast<int>(rng.below(5));
    if (rec.bucket == Bucket::tail) length += static_cast<int>(rng.below(4));
    length = std::clamp(std::max(length, static_cast<int>(labels.size())), 2, kMaxQueryLength);

    std::vector<int> toks;
    for (int p = 0; p < length; ++p) {
      const int label = p < static_cast<int>(labels.size()) ? labels[static_cast<std::size_t>(p)]
                                                            : labels[rng.below(labels.size())];
      const double u = rng.uniform();
      if (u < 0.55) {
        toks.push_back(leaf_pool[static_cast<std::size_t>(label)][pick_leaf_token(rng)]);
      } else if (u < 0.85) {
        toks.push_back(group_pool[static_cast<std::size_t>(tax.parent[static_cast<std::size_t>(label)])][pick_group(rng)]);
      } else {
        toks.push_back(common_pool[pick_common(rng)]);
      }
    }
    rng.shuffle(toks.begin(), toks.end());
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (i) rec.raw_text += ' ';
      rec.raw_text += words[static_cast<std::size_t>(toks[i])];
    }
    if (rng.bernoulli(0.2)) rec.raw_text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(rec.raw_text[0])));

    std::string key = rec.raw_text;
    key[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(key[0])));
    if (!seen.insert(key).second) continue;

    std::sort(labels.begin(), labels.end());
    rec.categories = std::move(labels);
    out.records.push_back(std::move(rec));
  }
  return out;
}

Split stratified_test_sample(const std::vector<QueryRecord>& corpus, int per_bucket, std::uint64_t seed) {
  if (per_bucket < 0) throw DataError("stratified_test_sample: per_bucket must be >= 0");
  const Rng root(seed);
  std::vector<char> chosen(corpus.size(), 0);
  const Bucket order[] = {Bucket::tail, Bucket::torso, Bucket::head};
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (corpus[i].bucket == order[b]) members.push_back(i);
    if (static_cast<int>(members.size()) < per_bucket) {
      throw DataError("stratified_test_sample: bucket '" + std::string(to_string(order[b])) + "' has " +
                      std::to_string(members.size()) + " queries, need " + std::to_string(per_bucket));
    }
    Rng rng = root.split(b);
    rng.shuffle(members.begin(), members.end());
    for (int i = 0; i < per_bucket; ++i) chosen[members[static_cast<std::size_t>(i)]] = 1;
  }
  Split out;
  for (Bucket b : order)
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (chosen[i] && corpus[i].bucket == b) out.held_out.push_back(corpus[i]);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (!chosen[i]) out.rest.push_back(corpus[i]);
  return out;
}

Split validation_split(const std::vector<QueryRecord>& records, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw DataError("validation_split: fraction must lie in [0, 1)");
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed, 0x7661);
  rng.shuffle(idx.begin(), idx.end());
  const auto n_valid = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(records.size())));
  std::vector<char> is_valid(records.size(), 0);
  for (std::size_t i = 0; i < n_valid; ++i) is_valid[idx[i]] = 1;
  Split out;
  for (std::size_t i = 0; i < records.size(); ++i) (is_valid[i] ? out.held_out : out.rest).push_back(records[i]);
  return out;
}

std::vector<std::int64_t> class_frequencies(const std::vector<QueryRecord>& records, int num_categories) {
  std::vector<std::int64_t> freq(static_cast<std::size_t>(num_categories), 0);
  for (const auto& r : records)
    for (int c : r.categories) {
      if (c < 0 || c >= num_categories) throw DataError("category id " + std::to_string(c) + " out of range");
      ++freq[static_cast<std::size_t>(c)];
    }
  return freq;
}

}  // namespace deepcat
