#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace ata {

/// Per-dimension z-score with the population convention (divide by N).
/// Dimensions with zero spread get std = 1 and are listed in zero_std_dims.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  std::vector<Eigen::Index> zero_std_dims;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  Eigen::VectorXd transform(const Eigen::VectorXd& x) const;
  /// Row-wise transform (rows are samples).
  Eigen::MatrixXd transform_rows(const Eigen::MatrixXd& x) const;
};

Standardizer fit_standardizer(const Eigen::MatrixXd& x);

struct PcaOptions {
  double var_target = 0.95;
  int max_dims = 64;
  std::uint64_t seed = 0;
};

/// Principal subspace of the training rows. Components are orthonormal rows
/// sorted by decreasing explained variance (sample convention, N - 1); the
/// largest-magnitude entry of every component is positive.
struct PcaModel {
  Eigen::MatrixXd components;          // D' x D
  Eigen::VectorXd explained_variance;  // D'
  Eigen::VectorXd center;              // D
  double total_variance = 0.0;
  PcaOptions options;
  /// Which rule fixed D': "variance", "max_dims", "rank" or "samples".
  const char* limited_by = "variance";

  std::size_t input_dim() const { return static_cast<std::size_t>(center.size()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(components.rows()); }
  double explained_ratio() const;

  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd project_rows(const Eigen::MatrixXd& x) const;
};

/// D' = min(max_dims, smallest m reaching var_target, rank, N - 1).
PcaModel fit_pca(const Eigen::MatrixXd& x, const PcaOptions& options = {});

/// Standardize, then project.
struct Preprocessor {
  Standardizer standardizer;
  PcaModel pca;

  Eigen::VectorXd reduce(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd reduce_rows(const Eigen::MatrixXd& x) const;
};

Preprocessor fit_preprocessor(const Eigen::MatrixXd& x, const PcaOptions& options = {});

}  // namespace ata
