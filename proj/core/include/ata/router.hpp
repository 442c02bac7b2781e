#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "ata/dataset.hpp"
#include "ata/rng.hpp"
#include "ata/scorebundle.hpp"

namespace ata {

/// Class order is fixed: index 0 = Act, 1 = Think, 2 = Abstain.
enum class Strategy : int { kAct = 0, kThink = 1, kAbstain = 2 };
inline constexpr int kNumStrategies = 3;

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);
/// ID -> Act, PartialOOD -> Think, FullOOD -> Abstain.
Strategy strategy_for(Label label);

struct Decision {
  Strategy strategy = Strategy::kAct;
  Eigen::VectorXd probabilities;
};

/// argmax over the three probabilities; exact ties go to the higher index
/// (Abstain over Think over Act).
Decision decide(const Eigen::VectorXd& probabilities);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Batch normalization of the raw input (no affine parameters). Training
/// normalizes with the batch mean and biased variance and folds them into
/// the running statistics with the given momentum.
struct InputNorm {
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

enum class RouterKind { kScore, kBaseline };

struct RouterModel {
  RouterKind kind = RouterKind::kScore;
  InputNorm norm;
  std::vector<DenseLayer> layers;  // hidden layers (ReLU) then the 3-way output
  double dropout = 0.0;            // applied after each hidden ReLU in train mode
  std::vector<std::string> input_layout;
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return static_cast<std::size_t>(norm.running_mean.size()); }
  std::vector<int> hidden_sizes() const;
};

inline const std::vector<int> kScoreRouterHidden = {64, 32};
inline const std::vector<int> kBaselineHidden = {512, 128};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; running
/// statistics start at mean 0, variance 1.
RouterModel init_router(RouterKind kind, std::size_t input_dim, const std::vector<int>& hidden,
                        double dropout, std::uint64_t seed);

enum class Mode { kTrain, kInfer };

/// Logits for every row of `inputs`. Train mode uses batch statistics and,
/// when `dropout_rng` is given and dropout > 0, inverted dropout.
Eigen::MatrixXd logits(const RouterModel& model, const Eigen::MatrixXd& inputs, Mode mode,
                       Rng* dropout_rng = nullptr);
/// Row-wise softmax of the logits.
Eigen::MatrixXd forward(const RouterModel& model, const Eigen::MatrixXd& inputs, Mode mode,
                        Rng* dropout_rng = nullptr);
/// Single input, infer mode.
Eigen::VectorXd forward(const RouterModel& model, const Eigen::VectorXd& input);

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

struct Gradients {
  std::vector<DenseLayer> layers;
};

/// Mean cross-entropy of a train-mode pass and its gradient with respect to
/// every weight and bias. `batch_mean`/`batch_var`, when non-null, receive
/// the normalization statistics of the batch.
double loss_and_gradients(const RouterModel& model, const Eigen::MatrixXd& inputs,
                          std::span<const int> classes, Gradients* grads,
                          Rng* dropout_rng = nullptr, Eigen::VectorXd* batch_mean = nullptr,
                          Eigen::VectorXd* batch_var = nullptr);

/// Mean cross-entropy in the given mode (no dropout).
double cross_entropy(const RouterModel& model, const Eigen::MatrixXd& inputs,
                     std::span<const int> classes, Mode mode);

// ------------------------------------------------------------------ mixup

/// Where Think rows are synthesized for the score router: in reduced
/// feature space (re-scored through the bundle) or directly on score
/// vectors. The baseline always mixes its raw inputs.
enum class MixupSpace { kFeatures, kScores };

struct MixupSpec {
  MixupSpace space = MixupSpace::kFeatures;
  double alpha = 0.5;
  double beta = 0.5;
  /// Synthetic Think rows; default min(|ID|, |OOD|).
  std::optional<std::size_t> count;
  std::uint64_t seed = 0;
  /// Test hook: use this lambda instead of sampling.
  std::optional<double> forced_lambda;
};

struct MixupResult {
  Eigen::MatrixXd rows;
  std::vector<double> lambdas;
  std::vector<std::size_t> id_rows;
  std::vector<std::size_t> ood_rows;
};

/// row_i = lambda_i * id[a_i] + (1 - lambda_i) * ood[b_i] with a_i, b_i
/// uniform and lambda_i ~ Beta(alpha, beta).
MixupResult mixup_think(const Eigen::MatrixXd& id_rows, const Eigen::MatrixXd& ood_rows,
                        const MixupSpec& spec);

// --------------------------------------------------------------- training

struct TrainHyper {
  double lr = 1e-3;
  std::size_t batch = 256;
  int patience = 10;
  int max_epochs = 500;
  /// Slice of the mlp split held out for early stopping.
  double holdout = 0.15;
  /// Baseline only.
  double dropout = 0.2;
  /// Use real PartialOOD samples in addition to mixup.
  bool use_partial_ood = true;
  /// Empty = the default for the router kind.
  std::vector<int> hidden;
};

struct TrainingSet {
  Eigen::MatrixXd inputs;
  std::vector<int> classes;

  std::size_t size() const { return classes.size(); }
  std::vector<std::size_t> class_counts() const;
};

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  bool early_stopped = false;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  std::size_t synthetic_think = 0;
};

/// Adam on the mean cross-entropy with a seed-derived batch order. Returns
/// the snapshot with the lowest validation loss; stops after `patience`
/// epochs without improvement.
RouterModel train_mlp(RouterKind kind, const TrainingSet& train, const TrainingSet& validation,
                      const TrainHyper& hyper, std::uint64_t seed, TrainReport* report = nullptr);

/// Score router over the bundle's score vectors. Think rows come from mixup
/// in reduced-feature space, re-scored through the bundle, plus any real
/// PartialOOD samples of the mlp split.
RouterModel train_router(const DetectorBundle& bundle, const Dataset& data,
                         const TrainHyper& hyper, const MixupSpec& mixup, std::uint64_t seed,
                         TrainReport* report = nullptr);

/// Baseline over concatenated raw embeddings [vision, text, fused] (those
/// present in the dataset), with mixup in raw space.
RouterModel train_baseline(const Dataset& data, const TrainHyper& hyper, const MixupSpec& mixup,
                           std::uint64_t seed, TrainReport* report = nullptr);

/// Raw modalities, in order, that the baseline reads from `data`.
std::vector<Modality> baseline_modalities(const Dataset& data);
/// Stacked [vision, text, fused] rows for the baseline.
Eigen::MatrixXd baseline_inputs(const Dataset& data, const std::vector<std::string>& ids,
                                const std::vector<Modality>& modalities);

}  // namespace ata
