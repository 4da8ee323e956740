#include "deepcat/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace deepcat {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>") {
    throw DataError("vocabulary: first two tokens must be <pad> and <unk>");
  }
  for (auto& t : tokens) {
    if (index_.contains(t)) throw DataError("vocabulary: duplicate token '" + t + "'");
    add(t);
  }
}

int Vocabulary::add(const std::string& token) {
  const auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = fnv1a64("vocab");
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

Vocabulary build_vocab(const std::vector<QueryRecord>& corpus, int min_freq) {
  if (corpus.empty()) throw DataError("build_vocab: empty corpus");
  std::map<std::string, std::int64_t> counts;
  for (const auto& r : corpus)
    for (auto& t : tokenize(r.raw_text)) ++counts[t];
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [t, n] : counts)
    if (n >= min_freq && t != "<pad>" && t != "<unk>") kept.emplace_back(t, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [t, n] : kept) v.add(t);
  return v;
}

std::vector<int> encode_query(std::string_view raw_text, const Vocabulary& vocab, int length) {
  const auto toks = tokenize(raw_text);
  if (toks.empty()) throw DataError("encode_query: query '" + std::string(raw_text) + "' has no tokens");
  std::vector<int> ids(static_cast<std::size_t>(length), Vocabulary::kPad);
  const std::size_t n = std::min(toks.size(), ids.size());
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id(toks[i]);
  return ids;
}

void encode_records(std::vector<QueryRecord>& records, const Vocabulary& vocab) {
  for (auto& r : records) r.tokens = encode_query(r.raw_text, vocab);
}

}  // namespace deepcat
