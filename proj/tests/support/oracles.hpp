#pragma once

// Reference implementations used only by the tests. Each one takes the
// direct route (explicit inverse, dense eigensolve, exhaustive scan) so it
// shares no code path with the library.

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ata/rollout.hpp"
#include "ata/router.hpp"
#include "ata/synth.hpp"

namespace oracle {

double mahalanobis_inverse(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& cov);

struct EigenPca {
  Eigen::MatrixXd components;  // rows, decreasing variance
  Eigen::VectorXd variances;
};
/// Eigendecomposition of the sample covariance (N - 1).
EigenPca eigen_pca(const Eigen::MatrixXd& x);

/// Smallest Euclidean distance from q to any row of points, summed in
/// plain left-to-right order.
double nearest_distance(const Eigen::MatrixXd& points, const Eigen::VectorXd& q);

/// Random SPD matrix with condition number roughly bounded by `spread`.
Eigen::MatrixXd random_spd(int d, std::uint64_t seed, double spread = 100.0);
Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed);

/// Bayes-optimal decision on the vision features of a synthetic draw, with
/// equal class priors. PartialOOD density integrates over the shift
/// fraction by quadrature.
ata::Strategy bayes_decide(const ata::SynthBenchmark& bench, const Eigen::VectorXd& vision);
std::vector<ata::Strategy> bayes_predict(const ata::SynthBenchmark& bench,
                                         const ata::Dataset& data,
                                         const std::vector<std::string>& ids);

/// Per-(suite, variant) tally written independently of rollout_account.
struct HandTally {
  int episodes = 0;
  int successes = 0;
  int prevented = 0;
  int act = 0;
  int think = 0;
  int abstain = 0;
  double time = 0.0;
};
std::map<std::pair<std::string, std::string>, HandTally> hand_tally(
    std::span<const ata::EpisodeRecord> log);

/// The Goal suite / swap variant row: 30 episodes, 0 Act, 2 Think (both
/// failing), 28 Abstain with counterfactual failures, mean time 4.33 s.
std::vector<ata::EpisodeRecord> table_goal_swap_fixture();

}  // namespace oracle
