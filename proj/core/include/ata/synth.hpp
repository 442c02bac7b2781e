#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "ata/dataset.hpp"

namespace ata {

/// Seeded synthetic benchmark. ID is a mixture of Gaussians whose
/// covariances are diagonal in a randomly rotated basis; the first
/// signal_rank rotated axes carry the within-cluster spread and the cluster
/// means, the rest carry a small isotropic noise. FullOOD is the same
/// distribution shifted by ood_shift sigma along a random signal direction
/// orthogonal to the plane of the cluster means, sigma being the average
/// within-cluster spread along it.
/// PartialOOD is an ID draw shifted by (1 - lambda) of that vector with
/// lambda uniform in [think_lambda_min, think_lambda_max].
struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t n_per_class = 1000;
  std::size_t vision_dim = 768;
  std::size_t text_dim = 960;
  bool with_text = true;
  int clusters = 3;
  int signal_rank = 3;
  double noise_variance = 1e-4;
  /// Distance between neighbouring cluster means, in within-cluster std.
  double cluster_separation = 15.0;
  double signal_variance_min = 1.0;
  double signal_variance_max = 1.5;
  double ood_shift = 6.0;
  double text_ood_shift = 3.0;
  double think_lambda_min = 0.3;
  double think_lambda_max = 0.7;
};

/// Generative parameters of one modality. x = offset + rotation * y with y
/// drawn in the rotated basis.
struct SynthModality {
  Eigen::MatrixXd rotation;  // D x D orthonormal
  Eigen::VectorXd offset;
  std::vector<Eigen::VectorXd> means;      // rotated coordinates
  std::vector<Eigen::VectorXd> variances;  // rotated coordinates, diagonal
  Eigen::VectorXd shift;                   // rotated coordinates
  double sigma = 0.0;
};

struct SynthBenchmark {
  SynthSpec spec;
  SynthModality vision;
  std::optional<SynthModality> text;
  Dataset dataset;  // splits unassigned
  std::vector<Label> labels;
  std::vector<int> cluster;
  std::vector<double> lambda;  // NaN unless PartialOOD
};

SynthBenchmark generate_synthetic(const SynthSpec& spec);

}  // namespace ata
