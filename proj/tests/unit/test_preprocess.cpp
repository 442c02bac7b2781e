#include <doctest.h>

#include "ata/error.hpp"
#include "ata/preprocess.hpp"
#include "ata/rng.hpp"
#include "oracles.hpp"

using namespace ata;

namespace {

Eigen::MatrixXd gaussian(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("standardizer uses the population convention") {
  Eigen::MatrixXd x(2, 1);
  x << 1, 3;
  auto s = fit_standardizer(x);
  CHECK(s.mean(0) == 2.0);
  CHECK(s.std(0) == 1.0);
  Eigen::MatrixXd z = s.transform_rows(x);
  CHECK(z(0, 0) == -1.0);
  CHECK(z(1, 0) == 1.0);
}

TEST_CASE("constant column gets std 1 and transforms to zero") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 5, 2, 5, 3, 5;
  auto s = fit_standardizer(x);
  CHECK(s.std(1) == 1.0);
  REQUIRE(s.zero_std_dims.size() == 1);
  CHECK(s.zero_std_dims[0] == 1);
  CHECK(s.transform_rows(x).col(1).isZero());
}

TEST_CASE("standardized columns have zero mean and unit population std") {
  Eigen::MatrixXd x = oracle::random_matrix(50, 8, 4) * 3.0;
  x.col(2).array() += 7.0;
  Eigen::MatrixXd z = fit_standardizer(x).transform_rows(x);
  for (int j = 0; j < 8; ++j) {
    double mean = z.col(j).sum() / 50.0;
    double var = (z.col(j).array() - mean).square().sum() / 50.0;
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("standardizer needs two samples") {
  CHECK_THROWS_AS(fit_standardizer(Eigen::MatrixXd::Ones(1, 3)), Error);
}

TEST_CASE("data on a plane in 5-d gives two components") {
  Eigen::MatrixXd basis = oracle::random_matrix(2, 5, 8);
  Eigen::MatrixXd x = gaussian(200, 2, 1) * basis;
  auto pca = fit_pca(x);
  CHECK(pca.output_dim() == 2);
  CHECK(pca.explained_ratio() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("isotropic 128-d data caps at 64 components") {
  auto pca = fit_pca(gaussian(10000, 128, 2));
  CHECK(pca.output_dim() == 64);
  CHECK(std::string(pca.limited_by) == "max_dims");
}

TEST_CASE("components and variances agree with an eigensolve of the covariance") {
  Eigen::MatrixXd x = oracle::random_matrix(100, 6, 10);
  x.col(0) *= 4.0;
  x.col(3) *= 2.0;
  auto pca = fit_pca(x, {1.0, 64, 0});
  auto ref = oracle::eigen_pca(x);
  REQUIRE(pca.output_dim() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(pca.explained_variance(i) - ref.variances(i)) <= 1e-6);
    double aligned = std::min((pca.components.row(i) - ref.components.row(i)).norm(),
                              (pca.components.row(i) + ref.components.row(i)).norm());
    CHECK(aligned <= 1e-6);
  }
}

TEST_CASE("pca invariants hold") {
  Eigen::MatrixXd x = oracle::random_matrix(300, 20, 12) * oracle::random_spd(20, 3);
  auto pca = fit_pca(x, {0.9, 64, 0});
  const auto d = static_cast<Eigen::Index>(pca.output_dim());
  Eigen::MatrixXd gram = pca.components * pca.components.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() <= 1e-6);
  for (Eigen::Index i = 1; i < d; ++i) {
    CHECK(pca.explained_variance(i) <= pca.explained_variance(i - 1));
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::Index arg;
    pca.components.row(i).cwiseAbs().maxCoeff(&arg);
    CHECK(pca.components(i, arg) > 0.0);
  }

  Eigen::MatrixXd p = pca.project_rows(x);
  for (Eigen::Index i = 0; i < d; ++i) {
    double var = (p.col(i).array() - p.col(i).mean()).square().sum() / (x.rows() - 1);
    CHECK(var == doctest::Approx(pca.explained_variance(i)).epsilon(1e-5));
  }

  // Mean squared reconstruction error is bounded by the unexplained variance.
  Eigen::MatrixXd centered = x.rowwise() - pca.center.transpose();
  Eigen::MatrixXd recon = p * pca.components;
  double mse = (centered - recon).squaredNorm() / (x.rows() - 1);
  CHECK(mse <= (1.0 - pca.explained_ratio()) * pca.total_variance + 1e-6);
}

TEST_CASE("projection examples") {
  Eigen::MatrixXd x = oracle::random_matrix(40, 5, 6);
  auto pca = fit_pca(x, {1.0, 64, 0});
  CHECK(pca.project(pca.center).isZero());

  // Reordered-summation recomputation.
  Eigen::VectorXd q = oracle::random_matrix(1, 5, 7).row(0).transpose();
  Eigen::VectorXd got = pca.project(q);
  for (Eigen::Index i = 0; i < got.size(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 4; j >= 0; --j) s += pca.components(i, j) * (q(j) - pca.center(j));
    CHECK(std::abs(got(i) - s) <= 1e-6 * std::max(1.0, std::abs(s)));
  }

  PcaModel select = pca;
  select.components = Eigen::MatrixXd::Zero(2, 5);
  select.components(0, 1) = 1.0;
  select.components(1, 3) = 1.0;
  select.center.setZero();
  Eigen::VectorXd picked = select.project(q);
  CHECK(picked(0) == q(1));
  CHECK(picked(1) == q(3));

  CHECK_THROWS_AS(pca.project(Eigen::VectorXd::Zero(4)), Error);
}

TEST_CASE("pca rejects zero-variance data and bad targets") {
  CHECK_THROWS_WITH_AS(fit_pca(Eigen::MatrixXd::Ones(10, 3)), doctest::Contains("zero variance"),
                       Error);
  CHECK_THROWS_AS(fit_pca(oracle::random_matrix(10, 3, 1), {0.0, 64, 0}), Error);
}

TEST_CASE("fewer samples than components caps at N - 1") {
  auto pca = fit_pca(oracle::random_matrix(5, 30, 2), {1.0, 64, 0});
  CHECK(pca.output_dim() == 4);
}

TEST_CASE("fit is deterministic") {
  Eigen::MatrixXd x = oracle::random_matrix(80, 12, 3);
  auto a = fit_preprocessor(x);
  auto b = fit_preprocessor(x);
  CHECK(a.pca.components == b.pca.components);
  CHECK(a.reduce_rows(x) == b.reduce_rows(x));
}
