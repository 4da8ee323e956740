#include "deepcat/cooccurrence.hpp"

#include <cmath>

namespace deepcat {

CountMatrix build_category_cooccurrence(const std::vector<QueryRecord>& train, int num_categories) {
  CountMatrix counts = CountMatrix::Zero(num_categories, num_categories);
  for (const auto& r : train) {
    if (r.categories.empty()) throw DataError("co-occurrence: query '" + r.raw_text + "' has no categories");
    for (std::size_t a = 0; a < r.categories.size(); ++a) {
      const int i = r.categories[a];
      if (i < 0 || i >= num_categories) throw DataError("co-occurrence: category id out of range");
      ++counts(i, i);
      for (std::size_t b = a + 1; b < r.categories.size(); ++b) {
        const int j = r.categories[b];
        if (j == i) continue;
        ++counts(i, j);
        ++counts(j, i);
      }
    }
  }
  return counts;
}

Mat cosine_normalize(const CountMatrix& counts) {
  if (counts.rows() != counts.cols()) throw DataError("cosine_normalize: matrix is not square");
  const Index n = counts.rows();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      if (counts(i, j) != counts(j, i)) throw DataError("cosine_normalize: counts are not symmetric");
      if (counts(i, j) < 0) throw DataError("cosine_normalize: negative count");
    }
  Mat out = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    if (counts(i, i) == 0) continue;
    for (Index j = 0; j < n; ++j) {
      if (counts(j, j) == 0) continue;
      out(i, j) = i == j ? 1.0
                         : static_cast<double>(counts(i, j)) /
                               std::sqrt(static_cast<double>(counts(i, i)) * static_cast<double>(counts(j, j)));
    }
  }
  return out;
}

}  // namespace deepcat
