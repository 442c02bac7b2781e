#include <doctest.h>

#include "ata/error.hpp"
#include "ata/nnindex.hpp"
#include "oracles.hpp"

using namespace ata;

TEST_CASE("single point index returns the distance to it") {
  Eigen::MatrixXd p(1, 2);
  p << 1, 1;
  auto idx = build_index(p);
  CHECK(score_knn(idx, Eigen::Vector2d(4, 5)) == 5.0);
}

TEST_CASE("duplicate points score zero at the duplicate") {
  Eigen::MatrixXd p(3, 2);
  p << 1, 2, 1, 2, 7, 7;
  CHECK(score_knn(build_index(p), Eigen::Vector2d(1, 2)) == 0.0);
}

TEST_CASE("one-dimensional example") {
  Eigen::MatrixXd p(2, 1);
  p << 0, 10;
  Eigen::VectorXd x(1);
  x << 3;
  CHECK(score_knn(build_index(p), x) == 3.0);
}

TEST_CASE("index agrees exactly with an exhaustive scan") {
  Eigen::MatrixXd pts = oracle::random_matrix(1000, 64, 1);
  auto idx = build_index(pts);
  Eigen::MatrixXd q = oracle::random_matrix(100, 64, 2);
  Eigen::VectorXd batch = idx.score_rows(q);
  for (int i = 0; i < 100; ++i) {
    double ref = oracle::nearest_distance(pts, q.row(i).transpose());
    CHECK(score_knn(idx, q.row(i).transpose()) == ref);
    CHECK(batch(i) == ref);
  }
  CHECK(score_knn(idx, pts.row(17).transpose()) == 0.0);
}

TEST_CASE("adding points never increases a score") {
  Eigen::MatrixXd pts = oracle::random_matrix(200, 8, 3);
  auto small = build_index(pts.topRows(50));
  auto large = build_index(pts);
  Eigen::MatrixXd q = oracle::random_matrix(50, 8, 4);
  for (int i = 0; i < 50; ++i) {
    CHECK(score_knn(large, q.row(i).transpose()) <= score_knn(small, q.row(i).transpose()));
  }
}

TEST_CASE("score is 1-Lipschitz") {
  auto idx = build_index(oracle::random_matrix(100, 6, 5));
  Eigen::MatrixXd a = oracle::random_matrix(50, 6, 6) * 2;
  Eigen::MatrixXd b = oracle::random_matrix(50, 6, 7) * 2;
  for (int i = 0; i < 50; ++i) {
    double gap = std::abs(score_knn(idx, a.row(i).transpose()) - score_knn(idx, b.row(i).transpose()));
    CHECK(gap <= (a.row(i) - b.row(i)).norm() + 1e-12);
  }
}

TEST_CASE("k-th neighbour distance") {
  Eigen::MatrixXd p(3, 1);
  p << 0, 1, 5;
  auto idx = build_index(p);
  Eigen::VectorXd x(1);
  x << 0;
  CHECK(idx.score(x, 2) == 1.0);
  CHECK(idx.score(x, 3) == 5.0);
  CHECK_THROWS_AS(idx.score(x, 4), Error);
}

TEST_CASE("index errors") {
  CHECK_THROWS_WITH_AS(build_index(Eigen::MatrixXd(0, 3)), doctest::Contains("empty"), Error);
  auto idx = build_index(Eigen::MatrixXd::Zero(2, 3));
  CHECK_THROWS_WITH_AS(score_knn(idx, Eigen::VectorXd::Zero(2)), doctest::Contains("dimension"),
                       Error);
}
