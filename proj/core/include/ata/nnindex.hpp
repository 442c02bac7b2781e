#pragma once

#include <Eigen/Core>

namespace ata {

/// Exact Euclidean nearest-neighbour index over a fixed point set.
///
/// Points are stored row-major and scanned with partial-distance early
/// exit: a candidate is abandoned once its running squared distance exceeds
/// the best found so far. The accumulation order per candidate is the plain
/// left-to-right sum, so the returned minimum is bit-identical to an
/// exhaustive scan.
class NnIndex {
 public:
  using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit NnIndex(const Eigen::MatrixXd& points);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }
  Eigen::MatrixXd points() const { return points_; }

  /// Distance to the k-th nearest point (k = 1: the nearest).
  double score(const Eigen::VectorXd& x, int k = 1) const;
  Eigen::VectorXd score_rows(const Eigen::MatrixXd& rows, int k = 1) const;

 private:
  Points points_;
};

NnIndex build_index(const Eigen::MatrixXd& points);
double score_knn(const NnIndex& index, const Eigen::VectorXd& x);

}  // namespace ata
