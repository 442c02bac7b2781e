#include <doctest.h>

#include "ata/error.hpp"
#include "ata/model_io.hpp"
#include "ata/router.hpp"
#include "ata/scorebundle.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace ata;

namespace {

// Rows around per-class centers; class c gets n rows.
TrainingSet blobs(const std::vector<Eigen::VectorXd>& centers, std::size_t n, double noise,
                  std::uint64_t seed) {
  Rng rng(seed);
  const auto d = centers[0].size();
  TrainingSet set;
  set.inputs.resize(static_cast<Eigen::Index>(centers.size() * n), d);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i, ++row) {
      for (Eigen::Index j = 0; j < d; ++j) set.inputs(row, j) = centers[c](j) + noise * rng.normal();
      set.classes.push_back(static_cast<int>(c));
    }
  }
  return set;
}

double accuracy(const RouterModel& m, const TrainingSet& set) {
  Eigen::MatrixXd p = forward(m, set.inputs, Mode::kInfer);
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (static_cast<int>(decide(p.row(i).transpose()).strategy) == set.classes[static_cast<std::size_t>(i)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(p.rows());
}

Eigen::VectorXd scalar(double v) { return Eigen::VectorXd::Constant(1, v); }

}  // namespace

TEST_CASE("decide examples and the conservative tie rule") {
  CHECK(decide(Eigen::Vector3d(0.7, 0.2, 0.1)).strategy == Strategy::kAct);
  CHECK(decide(Eigen::Vector3d(0.2, 0.2, 0.6)).strategy == Strategy::kAbstain);
  CHECK(decide(Eigen::Vector3d(0.5, 0.5, 0.0)).strategy == Strategy::kThink);
  CHECK(decide(Eigen::Vector3d(0.4, 0.2, 0.4)).strategy == Strategy::kAbstain);
}

TEST_CASE("decide is invariant to a constant logit shift") {
  Eigen::MatrixXd l = oracle::random_matrix(50, 3, 3) * 4.0;
  Eigen::MatrixXd p = softmax_rows(l);
  Eigen::MatrixXd q = softmax_rows(l.array() + 123.0);
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    CHECK(decide(p.row(i).transpose()).strategy == decide(q.row(i).transpose()).strategy);
    CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-12);
    CHECK((p.row(i).array() > 0.0).all());
  }
}

TEST_CASE("zero weights give uniform probabilities") {
  RouterModel m = init_router(RouterKind::kScore, 4, {8, 5}, 0.0, 1);
  for (auto& layer : m.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  Eigen::VectorXd p = forward(m, Eigen::VectorXd::Constant(4, 2.5));
  for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("init shapes and ranges") {
  RouterModel m = init_router(RouterKind::kScore, 4, kScoreRouterHidden, 0.0, 2);
  REQUIRE(m.layers.size() == 3);
  CHECK(m.layers[0].weight.rows() == 64);
  CHECK(m.layers[1].weight.rows() == 32);
  CHECK(m.layers[2].weight.rows() == 3);
  CHECK(m.hidden_sizes() == kScoreRouterHidden);
  CHECK(m.layers[0].weight.cwiseAbs().maxCoeff() <= 0.5);
  CHECK(m.norm.running_var.isOnes());
  CHECK_THROWS_AS(forward(m, Eigen::VectorXd::Zero(3)), Error);
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RouterModel m = init_router(RouterKind::kScore, 3, {5, 4}, 0.0, seed);
    Eigen::MatrixXd x = oracle::random_matrix(12, 3, seed + 10);
    std::vector<int> y;
    for (int i = 0; i < 12; ++i) y.push_back(i % 3);
    Gradients g;
    loss_and_gradients(m, x, y, &g);
    const double h = 1e-4;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      auto check_param = [&](double& param, double analytic) {
        const double keep = param;
        param = keep + h;
        const double up = cross_entropy(m, x, y, Mode::kTrain);
        param = keep - h;
        const double down = cross_entropy(m, x, y, Mode::kTrain);
        param = keep;
        const double numeric = (up - down) / (2 * h);
        CHECK(std::abs(numeric - analytic) <= 1e-4 * std::max(1.0, std::abs(numeric)));
      };
      for (Eigen::Index i = 0; i < m.layers[l].weight.size(); ++i) {
        check_param(m.layers[l].weight.data()[i], g.layers[l].weight.data()[i]);
      }
      for (Eigen::Index i = 0; i < m.layers[l].bias.size(); ++i) {
        check_param(m.layers[l].bias(i), g.layers[l].bias(i));
      }
    }
  }
}

TEST_CASE("frozen statistics of a batch reproduce its train-mode outputs") {
  RouterModel m = init_router(RouterKind::kScore, 4, {6, 5}, 0.0, 3);
  Eigen::MatrixXd x = oracle::random_matrix(32, 4, 4) * 3.0;
  x.col(1).array() += 5.0;
  std::vector<int> y(32, 0);
  Eigen::VectorXd mean, var;
  loss_and_gradients(m, x, y, nullptr, nullptr, &mean, &var);
  m.norm.running_mean = mean;
  m.norm.running_var = var;
  Eigen::MatrixXd train = forward(m, x, Mode::kTrain);
  Eigen::MatrixXd infer = forward(m, x, Mode::kInfer);
  CHECK((train - infer).cwiseAbs().maxCoeff() <= 1e-5);
  Eigen::MatrixXd scaled = forward(m, x * 2.0, Mode::kInfer);
  CHECK((scaled - infer).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("dropout 0 makes the baseline train and infer paths agree") {
  RouterModel m = init_router(RouterKind::kBaseline, 6, {16, 8}, 0.0, 5);
  Eigen::MatrixXd x = oracle::random_matrix(20, 6, 6);
  std::vector<int> y(20, 1);
  Eigen::VectorXd mean, var;
  Rng rng(1);
  loss_and_gradients(m, x, y, nullptr, &rng, &mean, &var);
  m.norm.running_mean = mean;
  m.norm.running_var = var;
  Rng again(1);
  CHECK((forward(m, x, Mode::kTrain, &again) - forward(m, x, Mode::kInfer)).cwiseAbs().maxCoeff() <=
        1e-5);

  RouterModel dropping = m;
  dropping.dropout = 0.5;
  Rng r2(1);
  CHECK((forward(dropping, x, Mode::kTrain, &r2) - forward(m, x, Mode::kInfer)).cwiseAbs().maxCoeff() >
        1e-3);
  CHECK(forward(dropping, x, Mode::kInfer) == forward(m, x, Mode::kInfer));
}

TEST_CASE("mixup with forced lambda returns the endpoints") {
  Eigen::MatrixXd id = oracle::random_matrix(5, 3, 1);
  Eigen::MatrixXd ood = oracle::random_matrix(7, 3, 2);
  MixupSpec spec;
  spec.count = 20;
  spec.forced_lambda = 1.0;
  auto one = mixup_think(id, ood, spec);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(one.rows.row(static_cast<Eigen::Index>(i)) == id.row(static_cast<Eigen::Index>(one.id_rows[i])));
  }
  spec.forced_lambda = 0.0;
  auto zero = mixup_think(id, ood, spec);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(zero.rows.row(static_cast<Eigen::Index>(i)) == ood.row(static_cast<Eigen::Index>(zero.ood_rows[i])));
  }
}

TEST_CASE("mixup lambdas follow Beta(0.5, 0.5)") {
  MixupSpec spec;
  spec.count = 10000;
  spec.seed = 7;
  auto r = mixup_think(Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Ones(3, 1), spec);
  double mean = 0.0;
  std::size_t edge = 0, middle = 0;
  for (double l : r.lambdas) {
    CHECK((l >= 0.0 && l <= 1.0));
    mean += l;
    if (l < 0.05 || l > 0.95) ++edge;
    if (l > 0.45 && l < 0.55) ++middle;
  }
  mean /= 10000.0;
  CHECK(std::abs(mean - 0.5) <= 0.02);
  // Same-width windows: the U shape puts more mass near the ends.
  CHECK(edge > 2 * middle);
}

TEST_CASE("mixup rows are affine combinations of their endpoints") {
  Eigen::MatrixXd id = oracle::random_matrix(30, 6, 3);
  Eigen::MatrixXd ood = oracle::random_matrix(40, 6, 4) * 5.0;
  MixupSpec spec;
  spec.seed = 2;
  auto r = mixup_think(id, ood, spec);
  CHECK(r.rows.rows() == 30);  // min(|ID|, |OOD|)
  for (Eigen::Index i = 0; i < r.rows.rows(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    Eigen::RowVectorXd expect = r.lambdas[u] * id.row(static_cast<Eigen::Index>(r.id_rows[u])) +
                                (1.0 - r.lambdas[u]) * ood.row(static_cast<Eigen::Index>(r.ood_rows[u]));
    CHECK((r.rows.row(i) - expect).cwiseAbs().maxCoeff() < 1e-9);
  }
  auto again = mixup_think(id, ood, spec);
  CHECK(again.rows == r.rows);
}

TEST_CASE("mixup rejects empty classes") {
  CHECK_THROWS_AS(mixup_think(Eigen::MatrixXd(0, 2), Eigen::MatrixXd::Ones(2, 2), {}), Error);
  CHECK_THROWS_AS(mixup_think(Eigen::MatrixXd::Ones(2, 2), Eigen::MatrixXd(0, 2), {}), Error);
}

TEST_CASE("separable scores are learned within 100 epochs") {
  auto train = blobs({scalar(0), scalar(5), scalar(10)}, 500, 0.5, 1);
  auto val = blobs({scalar(0), scalar(5), scalar(10)}, 50, 0.5, 2);
  TrainHyper hyper;
  hyper.max_epochs = 100;
  TrainReport report;
  auto m = train_mlp(RouterKind::kScore, train, val, hyper, 3, &report);
  CHECK(report.epochs_run <= 100);
  CHECK(accuracy(m, train) >= 0.99);
}

TEST_CASE("shuffled labels give chance accuracy") {
  auto make = [](std::size_t n, std::uint64_t seed) {
    TrainingSet set;
    set.inputs = oracle::random_matrix(static_cast<int>(n), 4, seed);
    Rng rng(seed + 1);
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(i % 3));
    rng.shuffle(std::span<int>(labels));
    set.classes = labels;
    return set;
  };
  auto train = make(1500, 10);
  auto val = make(3000, 20);
  TrainHyper hyper;
  hyper.max_epochs = 60;
  auto m = train_mlp(RouterKind::kScore, train, val, hyper, 4);
  CHECK(std::abs(accuracy(m, val) - 1.0 / 3.0) <= 0.05);
}

TEST_CASE("early stopping honours patience") {
  auto train = blobs({scalar(0), scalar(1), scalar(2)}, 100, 1.0, 5);
  auto val = blobs({scalar(0), scalar(1), scalar(2)}, 30, 1.0, 6);
  TrainHyper hyper;
  hyper.patience = 10;
  TrainReport report;
  train_mlp(RouterKind::kScore, train, val, hyper, 7, &report);
  CHECK(report.early_stopped);
  CHECK(report.epochs_run <= report.best_epoch + hyper.patience);
  CHECK(report.best_validation_loss ==
        report.validation_loss[static_cast<std::size_t>(report.best_epoch - 1)]);
}

TEST_CASE("training rejects a missing class") {
  auto train = blobs({scalar(0), scalar(5)}, 10, 0.1, 1);
  CHECK_THROWS_WITH_AS(train_mlp(RouterKind::kScore, train, {}, {}, 1),
                       doctest::Contains("Abstain"), Error);
}

TEST_CASE("baseline reaches high accuracy on separable raw features") {
  std::vector<Eigen::VectorXd> centers;
  for (int c = 0; c < 3; ++c) {
    centers.push_back(oracle::random_matrix(20, 1, 40 + static_cast<std::uint64_t>(c)).col(0) * 3.0);
  }
  auto train = blobs(centers, 300, 1.0, 8);
  auto val = blobs(centers, 100, 1.0, 9);
  TrainHyper hyper;
  hyper.max_epochs = 100;
  auto m = train_mlp(RouterKind::kBaseline, train, val, hyper, 5);
  CHECK(m.dropout == doctest::Approx(0.2));
  CHECK(m.hidden_sizes() == kBaselineHidden);
  CHECK(accuracy(m, val) >= 0.95);
}

TEST_CASE("baseline input is the concatenation of all raw embeddings") {
  auto data = testutil::small_dataset(8, true, 2, kVisionDim, kTextDim);
  auto mods = baseline_modalities(data);
  CHECK(mods == std::vector<Modality>{Modality::kVision, Modality::kText, Modality::kFused});
  Eigen::MatrixXd x = baseline_inputs(data, data.ids(Split::kMlp), mods);
  CHECK(x.cols() == 3456);
}

TEST_CASE("router training is deterministic and survives save/load") {
  testutil::TempDir tmp("router");
  auto data = testutil::small_dataset(60, false, 9);
  auto bundle = fit_bundle(data, testutil::quick_config("gmm_vision"));
  TrainHyper hyper;
  hyper.max_epochs = 30;
  MixupSpec mix;
  mix.seed = 4;
  TrainReport report;
  auto a = train_router(bundle, data, hyper, mix, 11, &report);
  auto b = train_router(bundle, data, hyper, mix, 11);
  CHECK(report.synthetic_think > 0);
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].weight == b.layers[l].weight);
    CHECK(a.layers[l].bias == b.layers[l].bias);
  }
  CHECK(a.norm.running_mean == b.norm.running_mean);
  CHECK(a.input_layout == std::vector<std::string>{"S_GMM_V"});

  save_router(a, tmp / "router");
  auto back = load_router(tmp / "router");
  Eigen::MatrixXd s = bundle.score_rows(data, data.ids(Split::kValidation));
  CHECK(forward(back, s, Mode::kInfer) == forward(a, s, Mode::kInfer));
  CHECK(back.input_layout == a.input_layout);
}

TEST_CASE("score-space mixup is selectable") {
  auto data = testutil::small_dataset(60, false, 12);
  auto bundle = fit_bundle(data, testutil::quick_config("gmm_vision"));
  TrainHyper hyper;
  hyper.max_epochs = 5;
  MixupSpec features, scores;
  scores.space = MixupSpace::kScores;
  TrainReport rf, rs;
  auto a = train_router(bundle, data, hyper, features, 3, &rf);
  auto b = train_router(bundle, data, hyper, scores, 3, &rs);
  CHECK(rf.synthetic_think == rs.synthetic_think);
  CHECK(a.layers[0].weight != b.layers[0].weight);
}

TEST_CASE("baseline trains end to end on a dataset") {
  auto data = testutil::small_dataset(40, true, 13);
  TrainHyper hyper;
  hyper.max_epochs = 5;
  auto m = train_baseline(data, hyper, {}, 2);
  CHECK(m.kind == RouterKind::kBaseline);
  CHECK(m.input_layout == std::vector<std::string>{"vision", "text", "fused"});
  CHECK(m.input_dim() == 32 + 40 + 72);
}
