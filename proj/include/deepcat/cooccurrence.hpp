#pragma once

#include "deepcat/corpus.hpp"
#include "deepcat/kernels.hpp"

#include <cstdint>

namespace deepcat {

using CountMatrix = MatrixR<std::int64_t>;

struct CoocMatrix {
  CountMatrix counts;
  /// counts[i][j] / sqrt(counts[i][i] * counts[j][j]).
  Mat normalized;
};

/// counts[i][j] (i != j) = queries labelled with both i and j;
/// counts[i][i] = queries labelled with i.
CountMatrix build_category_cooccurrence(const std::vector<QueryRecord>& train, int num_categories);

/// Ochiai normalization. Rows/cols with a zero diagonal map to zero. Throws
/// DataError for asymmetric or negative input.
Mat cosine_normalize(const CountMatrix& counts);

inline CoocMatrix build_cooc_matrix(const std::vector<QueryRecord>& train, int num_categories) {
  CoocMatrix m;
  m.counts = build_category_cooccurrence(train, num_categories);
  m.normalized = cosine_normalize(m.counts);
  return m;
}

}  // namespace deepcat
