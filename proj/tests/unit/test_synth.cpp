#include <doctest.h>

#include "ata/error.hpp"
#include "ata/synth.hpp"

using namespace ata;

TEST_CASE("generated benchmark has the requested shape") {
  SynthSpec spec;
  spec.n_per_class = 30;
  spec.vision_dim = 24;
  spec.text_dim = 16;
  auto b = generate_synthetic(spec);
  CHECK(b.dataset.features(Modality::kVision).rows() == 90);
  CHECK(b.dataset.features(Modality::kVision).dim() == 24);
  CHECK(b.dataset.features(Modality::kText).dim() == 16);
  CHECK(b.dataset.has(Modality::kFused));
  CHECK(b.labels.size() == 90);
  std::array<int, 3> counts{};
  for (auto l : b.labels) ++counts[static_cast<std::size_t>(l)];
  CHECK(counts == std::array<int, 3>{30, 30, 30});
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    const bool partial = b.labels[i] == Label::kPartialOod;
    CHECK(partial != std::isnan(b.lambda[i]));
    if (partial) CHECK((b.lambda[i] >= 0.3 && b.lambda[i] <= 0.7));
  }
  Eigen::MatrixXd q = b.vision.rotation;
  CHECK((q.transpose() * q - Eigen::MatrixXd::Identity(24, 24)).cwiseAbs().maxCoeff() <= 1e-10);
  for (const auto& s : b.dataset.samples()) CHECK(!s.split.has_value());
}

TEST_CASE("the generator is a pure function of the spec") {
  SynthSpec spec;
  spec.seed = 4;
  spec.n_per_class = 10;
  spec.vision_dim = 12;
  spec.with_text = false;
  auto a = generate_synthetic(spec);
  auto b = generate_synthetic(spec);
  CHECK(a.dataset.features(Modality::kVision).data == b.dataset.features(Modality::kVision).data);
  CHECK(!a.dataset.has(Modality::kText));
  spec.seed = 5;
  auto c = generate_synthetic(spec);
  CHECK(a.dataset.features(Modality::kVision).data != c.dataset.features(Modality::kVision).data);
}

TEST_CASE("FullOOD is displaced along the shift vector") {
  SynthSpec spec;
  spec.n_per_class = 400;
  spec.vision_dim = 16;
  spec.with_text = false;
  auto b = generate_synthetic(spec);
  const auto& v = b.dataset.features(Modality::kVision);
  Eigen::VectorXd id_mean = Eigen::VectorXd::Zero(16), ood_mean = Eigen::VectorXd::Zero(16);
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    Eigen::VectorXd row = v.data.row(static_cast<Eigen::Index>(i)).cast<double>().transpose();
    if (b.labels[i] == Label::kId) id_mean += row / 400.0;
    if (b.labels[i] == Label::kFullOod) ood_mean += row / 400.0;
  }
  Eigen::VectorXd expected = b.vision.rotation * b.vision.shift;
  CHECK(expected.norm() == doctest::Approx(6.0 * b.vision.sigma).epsilon(1e-9));
  // Cluster assignment noise in the means is well under one sigma.
  CHECK((ood_mean - id_mean - expected).norm() < 0.6 * expected.norm());
}

TEST_CASE("generator validates its spec") {
  SynthSpec spec;
  spec.vision_dim = 2;
  CHECK_THROWS_AS(generate_synthetic(spec), Error);
}
