#include "ata/nnindex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ata/error.hpp"

namespace ata {

NnIndex::NnIndex(const Eigen::MatrixXd& points) : points_(points) {
  if (points_.rows() == 0) throw Error("build_index: empty input");
  if (points_.cols() == 0) throw Error("build_index: zero-dimensional points");
  if (!points_.allFinite()) throw Error("build_index: non-finite point");
}

double NnIndex::score(const Eigen::VectorXd& x, int k) const {
  if (static_cast<std::size_t>(x.size()) != dim()) {
    throw Error("score_knn: dimension mismatch, index has D = " + std::to_string(dim()) +
                ", query has " + std::to_string(x.size()));
  }
  if (!x.allFinite()) throw Error("score_knn: non-finite query");
  if (k < 1 || static_cast<std::size_t>(k) > size()) {
    throw Error("score_knn: k must be in [1, " + std::to_string(size()) + "]");
  }
  const Eigen::Index d = points_.cols();
  const double* q = x.data();

  if (k == 1) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < points_.rows(); ++i) {
      const double* p = points_.data() + i * d;
      double acc = 0.0;
      Eigen::Index j = 0;
      for (; j < d; ++j) {
        const double diff = q[j] - p[j];
        acc += diff * diff;
        if (acc > best) break;
      }
      if (j == d && acc < best) best = acc;
    }
    return std::sqrt(best);
  }

  // k > 1: keep the k smallest squared distances (max-heap).
  std::vector<double> heap;
  heap.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < points_.rows(); ++i) {
    const double* p = points_.data() + i * d;
    const double bound = heap.size() == static_cast<std::size_t>(k)
                             ? heap.front()
                             : std::numeric_limits<double>::infinity();
    double acc = 0.0;
    Eigen::Index j = 0;
    for (; j < d; ++j) {
      const double diff = q[j] - p[j];
      acc += diff * diff;
      if (acc > bound) break;
    }
    if (j < d) continue;
    if (heap.size() < static_cast<std::size_t>(k)) {
      heap.push_back(acc);
      std::push_heap(heap.begin(), heap.end());
    } else if (acc < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = acc;
      std::push_heap(heap.begin(), heap.end());
    }
  }
  return std::sqrt(heap.front());
}

Eigen::VectorXd NnIndex::score_rows(const Eigen::MatrixXd& rows, int k) const {
  Eigen::VectorXd out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out(i) = score(rows.row(i).transpose(), k);
  return out;
}

NnIndex build_index(const Eigen::MatrixXd& points) { return NnIndex(points); }

double score_knn(const NnIndex& index, const Eigen::VectorXd& x) { return index.score(x, 1); }

}  // namespace ata
