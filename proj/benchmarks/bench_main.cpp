#include <benchmark/benchmark.h>

#include <Eigen/Core>

#include "ata/gmm.hpp"
#include "ata/nnindex.hpp"
#include "ata/preprocess.hpp"
#include "ata/rng.hpp"
#include "ata/router.hpp"

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  ata::Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

void BM_Mahalanobis(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  const Eigen::MatrixXd a = gaussian(d, d, 1);
  const Eigen::MatrixXd cov = a * a.transpose() / static_cast<double>(d) +
                              Eigen::MatrixXd::Identity(d, d);
  const ata::GaussianComponent comp(Eigen::VectorXd::Zero(d), cov, 1.0);
  const Eigen::VectorXd x = gaussian(d, 1, 2).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(ata::mahalanobis(x, comp));
}
BENCHMARK(BM_Mahalanobis)->Arg(8)->Arg(32)->Arg(64);

void BM_NearestNeighbour(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const ata::NnIndex index(gaussian(n, 32, 3));
  const Eigen::VectorXd q = gaussian(32, 1, 4).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(index.score(q));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_NearestNeighbour)->Arg(1000)->Arg(16000);

void BM_GmmFit(benchmark::State& state) {
  const Eigen::MatrixXd z = gaussian(state.range(0), 16, 5);
  ata::GmmOptions opt;
  opt.k = 3;
  opt.n_starts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(ata::fit_gmm(z, opt).meta.iterations);
}
BENCHMARK(BM_GmmFit)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_Pca(benchmark::State& state) {
  const Eigen::MatrixXd x = gaussian(state.range(0), 768, 6);
  for (auto _ : state) benchmark::DoNotOptimize(ata::fit_pca(x).output_dim());
}
BENCHMARK(BM_Pca)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_RouterForward(benchmark::State& state) {
  const ata::RouterModel model =
      ata::init_router(ata::RouterKind::kScore, 4, ata::kScoreRouterHidden, 0.0, 7);
  const Eigen::VectorXd x = gaussian(4, 1, 8).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(ata::forward(model, x));
}
BENCHMARK(BM_RouterForward);

}  // namespace

BENCHMARK_MAIN();
