#pragma once

#include "deepcat/corpus.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deepcat {

/// Lowercases and splits on whitespace and ASCII punctuation.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();
  /// Rebuilds from an explicit id-ordered token list (ids 0 and 1 must be the
  /// reserved tokens).
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::uint64_t hash() const;

  /// Adds `token` if absent and returns its id.
  int add(const std::string& token);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Tokens seen at least `min_freq` times; ids assigned by descending count,
/// then lexicographically.
Vocabulary build_vocab(const std::vector<QueryRecord>& corpus, int min_freq = 2);

/// Exactly `length` ids: truncated, then right-padded with PAD. Throws
/// DataError when the text has no tokens.
std::vector<int> encode_query(std::string_view raw_text, const Vocabulary& vocab,
                              int length = kMaxQueryLength);

void encode_records(std::vector<QueryRecord>& records, const Vocabulary& vocab);

}  // namespace deepcat
