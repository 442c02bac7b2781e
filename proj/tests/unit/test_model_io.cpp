#include <doctest.h>

#include "ata/error.hpp"
#include "ata/model_io.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace ata;

TEST_CASE("preprocessor round trip") {
  testutil::TempDir tmp("pre");
  Eigen::MatrixXd x = oracle::random_matrix(60, 9, 1);
  x.col(4).setConstant(2.0);
  auto pre = fit_preprocessor(x);
  save_preprocessor(pre, tmp / "pre");
  auto back = load_preprocessor(tmp / "pre");
  CHECK(back.reduce_rows(x) == pre.reduce_rows(x));
  CHECK(back.standardizer.zero_std_dims == pre.standardizer.zero_std_dims);
  CHECK(std::string(back.pca.limited_by) == pre.pca.limited_by);
  auto meta = read_json(tmp / "pre" / "meta.json");
  CHECK(meta["var_target"] == 0.95);
}

TEST_CASE("gmm round trip keeps scores and fit metadata") {
  testutil::TempDir tmp("gmm");
  Eigen::MatrixXd z = oracle::random_matrix(200, 4, 2);
  GmmOptions opt;
  opt.k = 2;
  opt.seed = 3;
  auto m = fit_gmm(z, opt);
  save_gmm(m, tmp / "gmm");
  auto back = load_gmm(tmp / "gmm");
  CHECK(back.score_rows(z) == m.score_rows(z));
  CHECK(back.rho == m.rho);
  CHECK(back.meta.final_avg_log_likelihood == m.meta.final_avg_log_likelihood);
  CHECK(back.meta.starts.size() == m.meta.starts.size());
}

TEST_CASE("index round trip") {
  testutil::TempDir tmp("knn");
  Eigen::MatrixXd p = oracle::random_matrix(30, 3, 4);
  NnIndex idx(p);
  save_index(idx, tmp / "knn");
  CHECK(load_index(tmp / "knn").points() == p);
}

TEST_CASE("loading from a missing directory fails cleanly") {
  testutil::TempDir tmp("missing");
  CHECK_THROWS_AS(load_gmm(tmp / "nope"), Error);
  CHECK_THROWS_AS(load_router(tmp / "nope"), Error);
  CHECK_THROWS_AS(load_bundle(tmp / "nope"), Error);
}
