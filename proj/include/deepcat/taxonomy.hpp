#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deepcat {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two-level product taxonomy. L1 ids and leaf ids are both dense from 0.
struct Taxonomy {
  std::vector<std::string> l1_names;
  std::vector<std::string> leaf_names;
  /// parent[leaf] is the L1 id that owns the leaf.
  std::vector<int> parent;

  int num_l1() const { return static_cast<int>(l1_names.size()); }
  int num_leaves() const { return static_cast<int>(leaf_names.size()); }

  /// Throws DataError unless every leaf has exactly one valid parent.
  void validate() const;
  /// Leaves under `l1`, ascending.
  std::vector<int> children(int l1) const;
  /// FNV-1a over the canonical text form; identifies the taxonomy in checkpoints.
  std::uint64_t hash() const;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace deepcat
