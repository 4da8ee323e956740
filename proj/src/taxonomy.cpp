#include "deepcat/taxonomy.hpp"

namespace deepcat {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Taxonomy::validate() const {
  if (l1_names.empty() || leaf_names.empty()) throw DataError("taxonomy: no categories");
  if (parent.size() != leaf_names.size()) throw DataError("taxonomy: parent table size mismatch");
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (parent[i] < 0 || parent[i] >= num_l1()) {
      throw DataError("taxonomy: leaf " + std::to_string(i) + " has invalid parent " + std::to_string(parent[i]));
    }
  }
}

std::vector<int> Taxonomy::children(int l1) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < parent.size(); ++i)
    if (parent[i] == l1) out.push_back(static_cast<int>(i));
  return out;
}

std::uint64_t Taxonomy::hash() const {
  std::string text;
  for (std::size_t i = 0; i < l1_names.size(); ++i) text += "l1\t" + std::to_string(i) + '\t' + l1_names[i] + '\n';
  for (std::size_t i = 0; i < leaf_names.size(); ++i) {
    text += "leaf\t" + std::to_string(i) + '\t' + leaf_names[i] + '\t' +
            std::to_string(i < parent.size() ? parent[i] : -1) + '\n';
  }
  return fnv1a64(text);
}

}  // namespace deepcat
