#pragma once

#include "deepcat/taxonomy.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deepcat {

/// Longest query the model sees; longer queries are truncated.
inline constexpr int kMaxQueryLength = 10;

enum class Bucket { tail, torso, head };

std::string_view to_string(Bucket b);
Bucket bucket_from_string(std::string_view s);

struct QueryRecord {
  std::string raw_text;
  /// Encoded ids, filled by encode_records(); empty until then.
  std::vector<int> tokens;
  /// Sorted, distinct leaf ids.
  std::vector<int> categories;
  std::int64_t frequency = 1;
  Bucket bucket = Bucket::tail;
};

struct GeneratorConfig {
  int num_l1 = 33;
  int num_leaves = 200;
  int vocab_size = 2000;
  int num_queries = 20000;
  double zipf_exponent = 1.1;
  double correlation_strength = 0.7;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  Taxonomy taxonomy;
  std::vector<QueryRecord> records;
};

/// Imbalanced multi-label query corpus. Leaf popularity is Zipfian; each
/// query carries 1-4 leaves, later leaves drawn from the same L1 as an
/// earlier one with probability `correlation_strength`; tokens come from
/// leaf-specific, L1-shared and common pools. Pure function of cfg.
SyntheticCorpus generate_synthetic_corpus(const GeneratorConfig& cfg);

/// Label-set size distribution used by the generator (index k -> P(size k+1)).
inline constexpr double kLabelCountProbs[4] = {0.45, 0.30, 0.15, 0.10};

/// Zipf probabilities over ranks 1..n, normalized.
std::vector<double> zipf_weights(int n, double exponent);

/// 1 -> tail, 2..100 -> torso, >100 -> head. Throws DataError below 1.
Bucket assign_bucket(std::int64_t frequency);
std::vector<Bucket> assign_buckets(std::span<const std::int64_t> frequencies);

struct Split {
  std::vector<QueryRecord> held_out;
  std::vector<QueryRecord> rest;
};

/// Draws exactly `per_bucket` distinct queries from each bucket without
/// replacement. held_out is the test set; rest keeps the original order.
Split stratified_test_sample(const std::vector<QueryRecord>& corpus, int per_bucket, std::uint64_t seed);

/// Random fraction of `records` held out for validation.
Split validation_split(const std::vector<QueryRecord>& records, double fraction, std::uint64_t seed);

/// Number of training queries labelled with each leaf.
std::vector<std::int64_t> class_frequencies(const std::vector<QueryRecord>& records, int num_categories);

}  // namespace deepcat
