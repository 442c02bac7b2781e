#include <doctest.h>

#include "ata/error.hpp"
#include "ata/sweep.hpp"
#include "testutil.hpp"

using namespace ata;

namespace {

PipelineOptions quick(const std::string& config) {
  PipelineOptions o;
  o.config = testutil::quick_config(config);
  o.hyper.max_epochs = 20;
  return o;
}

}  // namespace

TEST_CASE("a single-cell k sweep equals a direct run") {
  auto data = testutil::small_dataset(60, false, 1);
  auto opt = quick("gmm_vision");
  const std::vector<int> ks = {3};
  const std::vector<std::uint64_t> seeds = {7};
  auto sweep = sweep_k(data, ks, seeds, opt);
  auto direct = run_pipeline(data, opt, 7);
  REQUIRE(sweep.points.size() == 1);
  CHECK(sweep.points[0].completed == 1);
  CHECK(sweep.points[0].mean_f1 == direct.report.macro_f1);
  CHECK(sweep.points[0].std_f1 == 0.0);
  CHECK(sweep.axis == "k");
}

TEST_CASE("fraction 1.0 reproduces the plain run") {
  auto data = testutil::small_dataset(60, false, 2);
  std::vector<PipelineOptions> configs = {quick("gmm_vision")};
  const std::vector<double> fractions = {1.0};
  const std::vector<std::uint64_t> seeds = {3};
  auto results = sweep_data(data, fractions, seeds, configs);
  REQUIRE(results.size() == 1);
  auto direct = run_pipeline(data, configs[0], 3);
  CHECK(results[0].cells[0].macro_f1 == direct.report.macro_f1);
}

TEST_CASE("a subsample too small for K is a failed cell") {
  auto data = testutil::small_dataset(60, false, 3);
  auto opt = quick("gmm_vision");
  opt.config.k = 8;
  std::vector<PipelineOptions> configs = {opt};
  const std::vector<double> fractions = {0.01, 1.0};
  const std::vector<std::uint64_t> seeds = {1, 2};
  auto results = sweep_data(data, fractions, seeds, configs);
  const auto& r = results[0];
  REQUIRE(r.points.size() == 2);
  CHECK(r.points[0].failed == 2);
  CHECK(r.points[0].completed == 0);
  CHECK(std::isnan(r.points[0].mean_f1));
  CHECK(!r.cells[0].error.empty());
  CHECK(r.points[1].completed == 2);
  std::vector<SweepResult> all = {r};
  CHECK(sweep_csv(all).rfind("config,axis,value,mean_f1,std_f1,completed,failed\n", 0) == 0);
}

TEST_CASE("sweeps are deterministic") {
  auto data = testutil::small_dataset(50, false, 4);
  auto opt = quick("gmm_vision");
  const std::vector<int> ks = {1, 2};
  const std::vector<std::uint64_t> seeds = {1, 2};
  auto a = sweep_k(data, ks, seeds, opt);
  auto b = sweep_k(data, ks, seeds, opt);
  CHECK(sweep_to_json(a) == sweep_to_json(b));
  REQUIRE(a.cells.size() == 4);
  CHECK(a.cells[0].axis_value == 1.0);
  CHECK(a.cells[2].axis_value == 2.0);
}

TEST_CASE("k sweep propagates errors") {
  auto data = testutil::small_dataset(20, false, 5);
  const std::vector<int> ks = {500};
  const std::vector<std::uint64_t> seeds = {1};
  CHECK_THROWS_AS(sweep_k(data, ks, seeds, quick("gmm_vision")), Error);
}

TEST_CASE("pipeline evaluates the validation split") {
  auto data = testutil::small_dataset(60, true, 6);
  auto r = run_pipeline(data, quick("gmm_all_plus_knn"), 1);
  CHECK(r.ids == data.ids(Split::kValidation));
  CHECK(r.report.total == r.ids.size());
  auto base = run_pipeline(data, quick("baseline_raw"), 1);
  CHECK(base.report.total == r.report.total);
}
