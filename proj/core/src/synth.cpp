#include "ata/synth.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include <Eigen/QR>

#include "ata/error.hpp"
#include "ata/rng.hpp"

namespace ata {

namespace {

Eigen::MatrixXd random_rotation(std::size_t d, Rng& rng) {
  Eigen::MatrixXd g(d, d);
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
  // Fix the sign ambiguity of QR so the rotation is a function of g alone.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

SynthModality make_modality(const SynthSpec& spec, std::size_t d, double shift_sigmas,
                            Rng& rng) {
  const auto r = static_cast<Eigen::Index>(spec.signal_rank);
  SynthModality m;
  m.rotation = random_rotation(d, rng);
  m.offset.resize(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < m.offset.size(); ++i) m.offset(i) = rng.normal();

  // Cluster means on a circle of the plane spanned by two random signal
  // directions; neighbouring means are cluster_separation apart.
  Eigen::VectorXd a(r), b(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    a(i) = rng.normal();
    b(i) = rng.normal();
  }
  a.normalize();
  b -= b.dot(a) * a;
  b.normalize();
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  const int k = spec.clusters;
  const double step = 2.0 * std::numbers::pi / k;
  const double mean_scale = spec.signal_variance_min + spec.signal_variance_max;
  const double radius =
      k > 1 ? spec.cluster_separation * std::sqrt(mean_scale / 2.0) / (2.0 * std::sin(step / 2.0))
            : 0.0;
  Eigen::VectorXd sigma2 = Eigen::VectorXd::Zero(r);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    mean.head(r) = radius * (std::cos(phase + c * step) * a + std::sin(phase + c * step) * b);
    Eigen::VectorXd var = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d),
                                                    spec.noise_variance);
    for (Eigen::Index i = 0; i < r; ++i) {
      var(i) = spec.signal_variance_min +
               (spec.signal_variance_max - spec.signal_variance_min) * rng.uniform();
    }
    sigma2 += var.head(r);
    m.means.push_back(std::move(mean));
    m.variances.push_back(std::move(var));
  }
  sigma2 /= k;

  // Shift within the plane of the cluster means: shifted samples fall
  // between or beyond the clusters, where a single Gaussian still puts mass.
  const double angle = 2.0 * std::numbers::pi * rng.uniform();
  const Eigen::VectorXd u = std::cos(angle) * a + std::sin(angle) * b;
  m.sigma = std::sqrt(u.cwiseProduct(u).dot(sigma2));
  m.shift = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  m.shift.head(r) = shift_sigmas * m.sigma * u;
  return m;
}

// Rotated-basis draw from cluster c, then shifted by `shift_fraction` of
// the OOD shift.
void draw_rotated(const SynthModality& m, int c, double shift_fraction, Rng& rng,
                  Eigen::Ref<Eigen::VectorXd> out) {
  const auto& mean = m.means[static_cast<std::size_t>(c)];
  const auto& var = m.variances[static_cast<std::size_t>(c)];
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) = mean(i) + std::sqrt(var(i)) * rng.normal() + shift_fraction * m.shift(i);
  }
}

FeatureMatrix to_features(Modality modality, const SynthModality& m, const Eigen::MatrixXd& y,
                          const std::vector<std::string>& ids) {
  // y holds one sample per column in the rotated basis.
  Eigen::MatrixXd x = (m.rotation * y).colwise() + m.offset;
  FeatureMatrix f;
  f.modality = modality;
  f.data = x.transpose().cast<float>();
  f.ids = ids;
  return f;
}

}  // namespace

SynthBenchmark generate_synthetic(const SynthSpec& spec) {
  if (spec.n_per_class < 1) throw Error("synth: n_per_class must be >= 1");
  if (spec.clusters < 1) throw Error("synth: clusters must be >= 1");
  if (spec.signal_rank < 3 || static_cast<std::size_t>(spec.signal_rank) > spec.vision_dim ||
      (spec.with_text && static_cast<std::size_t>(spec.signal_rank) > spec.text_dim)) {
    throw Error("synth: signal_rank must be in [3, D]");
  }
  if (!(spec.think_lambda_min >= 0.0 && spec.think_lambda_min <= spec.think_lambda_max &&
        spec.think_lambda_max <= 1.0)) {
    throw Error("synth: think lambda range must lie in [0, 1]");
  }
  if (!(spec.noise_variance > 0.0 && spec.signal_variance_min > 0.0 &&
        spec.signal_variance_min <= spec.signal_variance_max)) {
    throw Error("synth: variances must be positive");
  }

  SynthBenchmark bench;
  bench.spec = spec;
  Rng param_rng(derive_seed(spec.seed, "synth-vision-params"));
  bench.vision = make_modality(spec, spec.vision_dim, spec.ood_shift, param_rng);
  if (spec.with_text) {
    Rng text_rng(derive_seed(spec.seed, "synth-text-params"));
    bench.text = make_modality(spec, spec.text_dim, spec.text_ood_shift, text_rng);
  }

  const std::size_t n = 3 * spec.n_per_class;
  Eigen::MatrixXd yv(static_cast<Eigen::Index>(spec.vision_dim), static_cast<Eigen::Index>(n));
  Eigen::MatrixXd yt;
  if (bench.text) yt.resize(static_cast<Eigen::Index>(spec.text_dim), static_cast<Eigen::Index>(n));

  Rng rng(derive_seed(spec.seed, "synth-samples"));
  Manifest manifest;
  std::vector<std::string> ids;
  const Label order[] = {Label::kId, Label::kPartialOod, Label::kFullOod};
  std::size_t i = 0;
  for (Label label : order) {
    for (std::size_t j = 0; j < spec.n_per_class; ++j, ++i) {
      const int c = static_cast<int>(rng.below(static_cast<std::size_t>(spec.clusters)));
      double lambda = std::numeric_limits<double>::quiet_NaN();
      double fraction = 0.0;
      if (label == Label::kFullOod) fraction = 1.0;
      if (label == Label::kPartialOod) {
        lambda = spec.think_lambda_min +
                 (spec.think_lambda_max - spec.think_lambda_min) * rng.uniform();
        fraction = 1.0 - lambda;
      }
      draw_rotated(bench.vision, c, fraction, rng, yv.col(static_cast<Eigen::Index>(i)));
      if (bench.text) draw_rotated(*bench.text, c, fraction, rng, yt.col(static_cast<Eigen::Index>(i)));

      char id[32];
      std::snprintf(id, sizeof id, "syn-%06zu", i);
      ids.emplace_back(id);
      bench.labels.push_back(label);
      bench.cluster.push_back(c);
      bench.lambda.push_back(lambda);
      ManifestRecord rec;
      rec.id = id;
      rec.label = label;
      rec.episode_id = id;
      rec.suite = "synthetic";
      rec.variant = "cluster-" + std::to_string(c);
      rec.modality = Modality::kVision;
      manifest.records.push_back(rec);
      if (bench.text) {
        rec.modality = Modality::kText;
        manifest.records.push_back(rec);
      }
    }
  }

  std::map<Modality, FeatureMatrix> features;
  features.emplace(Modality::kVision, to_features(Modality::kVision, bench.vision, yv, ids));
  if (bench.text) {
    features.emplace(Modality::kText, to_features(Modality::kText, *bench.text, yt, ids));
    features.emplace(Modality::kFused, fuse_matrices(features.at(Modality::kVision),
                                                     features.at(Modality::kText)));
  }
  bench.dataset = Dataset(std::move(manifest), std::move(features));
  return bench;
}

}  // namespace ata
