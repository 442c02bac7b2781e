#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace ata {

/// (1 - rho) * cov + rho * (trace(cov) / D) * I. Throws when cov is not
/// symmetric to 1e-6 (relative to its largest entry) or rho is outside [0, 1].
Eigen::MatrixXd shrink_covariance(const Eigen::MatrixXd& cov, double rho);

/// One Gaussian with its lower Cholesky factor. Distances are computed by
/// triangular solves against the factor, never through an explicit inverse.
class GaussianComponent {
 public:
  GaussianComponent(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double weight);
  /// Rebuilds a component from a stored factor (covariance = L L^T).
  static GaussianComponent from_factor(Eigen::VectorXd mean, Eigen::MatrixXd factor,
                                       double weight);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const Eigen::MatrixXd& factor() const { return factor_; }
  double weight() const { return weight_; }
  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  double log_det() const { return log_det_; }

  double squared_mahalanobis(const Eigen::VectorXd& x) const;
  /// Squared distances of every row of `rows`.
  Eigen::VectorXd squared_mahalanobis_rows(const Eigen::MatrixXd& rows) const;
  double log_density(const Eigen::VectorXd& x) const;

 private:
  GaussianComponent() = default;

  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd factor_;
  double weight_ = 1.0;
  double log_det_ = 0.0;
};

double mahalanobis(const Eigen::VectorXd& x, const GaussianComponent& component);

struct GmmOptions {
  int k = 3;
  double rho = 0.01;
  int n_starts = 5;
  std::uint64_t seed = 0;
  int max_iterations = 200;
  double tolerance = 1e-4;
};

struct GmmStartTrace {
  std::uint64_t seed = 0;
  /// Average log-likelihood after initialization and after every M-step.
  std::vector<double> avg_log_likelihood;
  /// Iterations at which a starved component was re-seeded.
  std::vector<int> reseed_iterations;
  int iterations = 0;
  bool converged = false;
  /// The last M-step would have lowered the likelihood and was discarded.
  bool stopped_on_decrease = false;
};

struct GmmFitMeta {
  int n_starts = 0;
  int iterations = 0;
  double final_avg_log_likelihood = 0.0;
  std::uint64_t seed = 0;
  int best_start = 0;
  int reseeds = 0;
  std::vector<GmmStartTrace> starts;
};

struct GmmModel {
  std::vector<GaussianComponent> components;
  double rho = 0.01;
  GmmFitMeta meta;

  std::size_t dim() const { return components.empty() ? 0 : components[0].dim(); }
  double score(const Eigen::VectorXd& x) const;
  Eigen::VectorXd score_rows(const Eigen::MatrixXd& rows) const;
  double avg_log_likelihood(const Eigen::MatrixXd& rows) const;
};

/// EM with k-means++ seeding, repeated n_starts times; the start with the
/// highest final average log-likelihood is kept (ties: lowest start index).
/// Every M-step covariance is shrunk before factorization.
GmmModel fit_gmm(const Eigen::MatrixXd& z, const GmmOptions& options);

/// min_k mahalanobis(x, component_k). Mixture weights do not enter.
double score_gmm(const GmmModel& model, const Eigen::VectorXd& x);

}  // namespace ata
