#include "ata/router.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ata/error.hpp"
#include "ata/log.hpp"

namespace ata {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kAct: return "Act";
    case Strategy::kThink: return "Think";
    case Strategy::kAbstain: return "Abstain";
  }
  return "?";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "Act") return Strategy::kAct;
  if (text == "Think") return Strategy::kThink;
  if (text == "Abstain") return Strategy::kAbstain;
  throw Error("unknown strategy '" + std::string(text) + "'");
}

Strategy strategy_for(Label label) {
  switch (label) {
    case Label::kId: return Strategy::kAct;
    case Label::kPartialOod: return Strategy::kThink;
    case Label::kFullOod: return Strategy::kAbstain;
  }
  return Strategy::kAbstain;
}

Decision decide(const Eigen::VectorXd& probabilities) {
  if (probabilities.size() != kNumStrategies) {
    throw Error("decide: expected 3 probabilities");
  }
  int best = 0;
  for (int i = 1; i < kNumStrategies; ++i) {
    if (probabilities(i) >= probabilities(best)) best = i;
  }
  return {static_cast<Strategy>(best), probabilities};
}

std::vector<int> RouterModel::hidden_sizes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    out.push_back(static_cast<int>(layers[i].weight.rows()));
  }
  return out;
}

RouterModel init_router(RouterKind kind, std::size_t input_dim, const std::vector<int>& hidden,
                        double dropout, std::uint64_t seed) {
  if (input_dim == 0) throw Error("init_router: zero input dimension");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("init_router: dropout must be in [0, 1)");
  RouterModel model;
  model.kind = kind;
  model.dropout = dropout;
  model.seed = seed;
  const auto d = static_cast<Eigen::Index>(input_dim);
  model.norm.running_mean = Eigen::VectorXd::Zero(d);
  model.norm.running_var = Eigen::VectorXd::Ones(d);
  Rng rng(derive_seed(seed, "router-init"));
  std::vector<int> sizes = hidden;
  sizes.push_back(kNumStrategies);
  Eigen::Index fan_in = d;
  for (int out : sizes) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer;
    layer.weight.resize(out, fan_in);
    layer.bias.resize(out);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) {
        layer.weight(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
      }
    }
    for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = (2.0 * rng.uniform() - 1.0) * bound;
    model.layers.push_back(std::move(layer));
    fan_in = out;
  }
  return model;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Eigen::ArrayXd e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    out.row(i) = (e / e.sum()).matrix().transpose();
  }
  return out;
}

namespace {

struct BatchStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

BatchStats batch_stats(const Eigen::MatrixXd& x) {
  BatchStats s;
  s.mean = x.colwise().mean().transpose();
  s.var = (x.rowwise() - s.mean.transpose()).colwise().squaredNorm().transpose() /
          static_cast<double>(x.rows());
  return s;
}

Eigen::MatrixXd normalize(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                          const Eigen::VectorXd& var, double eps) {
  const Eigen::RowVectorXd inv = (var.array() + eps).rsqrt().matrix().transpose();
  return (x.rowwise() - mean.transpose()).array().rowwise() * inv.array();
}

void check_input(const RouterModel& model, const Eigen::MatrixXd& inputs) {
  if (model.layers.empty()) throw Error("router model has no layers");
  if (static_cast<std::size_t>(inputs.cols()) != model.input_dim()) {
    std::ostringstream msg;
    msg << "router expects " << model.input_dim() << " inputs, got " << inputs.cols();
    throw Error(msg.str());
  }
  if (!inputs.allFinite()) throw Error("router: non-finite input");
}

// Activations kept for backprop: inputs to every dense layer and the
// pre-activation / dropout mask of every hidden layer.
struct Trace {
  std::vector<Eigen::MatrixXd> layer_inputs;
  std::vector<Eigen::MatrixXd> pre_activations;
  std::vector<Eigen::MatrixXd> masks;
  Eigen::MatrixXd logits;
};

Trace run(const RouterModel& model, const Eigen::MatrixXd& inputs, Mode mode, Rng* dropout_rng,
          BatchStats* stats_out) {
  check_input(model, inputs);
  Trace t;
  Eigen::MatrixXd h;
  if (mode == Mode::kTrain) {
    if (inputs.rows() < 2) throw Error("train-mode forward needs a batch of at least 2");
    BatchStats s = batch_stats(inputs);
    h = normalize(inputs, s.mean, s.var, model.norm.epsilon);
    if (stats_out) *stats_out = std::move(s);
  } else {
    h = normalize(inputs, model.norm.running_mean, model.norm.running_var, model.norm.epsilon);
  }
  const bool drop = mode == Mode::kTrain && dropout_rng && model.dropout > 0.0;
  const double keep = 1.0 - model.dropout;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    t.layer_inputs.push_back(h);
    Eigen::MatrixXd z = (h * layer.weight.transpose()).rowwise() + layer.bias.transpose();
    if (l + 1 == model.layers.size()) {
      t.logits = std::move(z);
      break;
    }
    t.pre_activations.push_back(z);
    h = z.cwiseMax(0.0);
    Eigen::MatrixXd mask = Eigen::MatrixXd::Ones(h.rows(), h.cols());
    if (drop) {
      for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      }
      h = h.cwiseProduct(mask);
    }
    t.masks.push_back(std::move(mask));
  }
  return t;
}

double mean_cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> classes) {
  if (static_cast<std::size_t>(logits.rows()) != classes.size()) {
    throw Error("cross_entropy: inputs and classes differ in length");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = classes[static_cast<std::size_t>(i)];
    if (y < 0 || y >= kNumStrategies) throw Error("cross_entropy: class out of range");
    const double top = logits.row(i).maxCoeff();
    const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
    total += lse - logits(i, y);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

Eigen::MatrixXd logits(const RouterModel& model, const Eigen::MatrixXd& inputs, Mode mode,
                       Rng* dropout_rng) {
  return run(model, inputs, mode, dropout_rng, nullptr).logits;
}

Eigen::MatrixXd forward(const RouterModel& model, const Eigen::MatrixXd& inputs, Mode mode,
                        Rng* dropout_rng) {
  return softmax_rows(logits(model, inputs, mode, dropout_rng));
}

Eigen::VectorXd forward(const RouterModel& model, const Eigen::VectorXd& input) {
  return forward(model, Eigen::MatrixXd(input.transpose()), Mode::kInfer).row(0).transpose();
}

double cross_entropy(const RouterModel& model, const Eigen::MatrixXd& inputs,
                     std::span<const int> classes, Mode mode) {
  return mean_cross_entropy(logits(model, inputs, mode), classes);
}

double loss_and_gradients(const RouterModel& model, const Eigen::MatrixXd& inputs,
                          std::span<const int> classes, Gradients* grads, Rng* dropout_rng,
                          Eigen::VectorXd* batch_mean, Eigen::VectorXd* batch_var) {
  BatchStats stats;
  Trace t = run(model, inputs, Mode::kTrain, dropout_rng, &stats);
  const double loss = mean_cross_entropy(t.logits, classes);
  if (batch_mean) *batch_mean = stats.mean;
  if (batch_var) *batch_var = stats.var;
  if (!grads) return loss;

  const double n = static_cast<double>(inputs.rows());
  Eigen::MatrixXd delta = softmax_rows(t.logits);
  for (Eigen::Index i = 0; i < delta.rows(); ++i) delta(i, classes[static_cast<std::size_t>(i)]) -= 1.0;
  delta /= n;

  grads->layers.resize(model.layers.size());
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    auto& g = grads->layers[l];
    g.weight = delta.transpose() * t.layer_inputs[l];
    g.bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd upstream = delta * model.layers[l].weight;
    upstream = upstream.cwiseProduct(t.masks[l - 1]);
    delta = upstream.array() * (t.pre_activations[l - 1].array() > 0.0).cast<double>();
  }
  return loss;
}

// ------------------------------------------------------------------ mixup

MixupResult mixup_think(const Eigen::MatrixXd& id_rows, const Eigen::MatrixXd& ood_rows,
                        const MixupSpec& spec) {
  if (id_rows.rows() == 0) throw Error("mixup_think: no ID rows");
  if (ood_rows.rows() == 0) throw Error("mixup_think: no OOD rows");
  if (id_rows.cols() != ood_rows.cols()) {
    throw Error("mixup_think: ID and OOD rows differ in dimension");
  }
  if (spec.forced_lambda && !(*spec.forced_lambda >= 0.0 && *spec.forced_lambda <= 1.0)) {
    throw Error("mixup_think: forced lambda must be in [0, 1]");
  }
  const std::size_t count =
      spec.count.value_or(static_cast<std::size_t>(std::min(id_rows.rows(), ood_rows.rows())));
  MixupResult out;
  out.rows.resize(static_cast<Eigen::Index>(count), id_rows.cols());
  Rng rng(spec.seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t a = rng.below(static_cast<std::size_t>(id_rows.rows()));
    const std::size_t b = rng.below(static_cast<std::size_t>(ood_rows.rows()));
    const double lambda = spec.forced_lambda ? *spec.forced_lambda : rng.beta(spec.alpha, spec.beta);
    out.rows.row(static_cast<Eigen::Index>(i)) =
        lambda * id_rows.row(static_cast<Eigen::Index>(a)) +
        (1.0 - lambda) * ood_rows.row(static_cast<Eigen::Index>(b));
    out.lambdas.push_back(lambda);
    out.id_rows.push_back(a);
    out.ood_rows.push_back(b);
  }
  return out;
}

// --------------------------------------------------------------- training

std::vector<std::size_t> TrainingSet::class_counts() const {
  std::vector<std::size_t> counts(kNumStrategies, 0);
  for (int c : classes) ++counts[static_cast<std::size_t>(c)];
  return counts;
}

namespace {

struct AdamState {
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  long step = 0;
};

void adam_update(RouterModel& model, const Gradients& g, AdamState& s, double lr) {
  constexpr double b1 = 0.9;
  constexpr double b2 = 0.999;
  constexpr double eps = 1e-8;
  if (s.m.empty()) {
    for (const auto& layer : model.layers) {
      DenseLayer zero{Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                      Eigen::VectorXd::Zero(layer.bias.size())};
      s.m.push_back(zero);
      s.v.push_back(zero);
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    auto& m = s.m[l];
    auto& v = s.v[l];
    m.weight = b1 * m.weight + (1.0 - b1) * g.layers[l].weight;
    v.weight = b2 * v.weight + (1.0 - b2) * g.layers[l].weight.cwiseAbs2();
    m.bias = b1 * m.bias + (1.0 - b1) * g.layers[l].bias;
    v.bias = b2 * v.bias + (1.0 - b2) * g.layers[l].bias.cwiseAbs2();
    layer.weight.array() -= lr * (m.weight.array() / c1) / ((v.weight.array() / c2).sqrt() + eps);
    layer.bias.array() -= lr * (m.bias.array() / c1) / ((v.bias.array() / c2).sqrt() + eps);
  }
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

}  // namespace

RouterModel train_mlp(RouterKind kind, const TrainingSet& train, const TrainingSet& validation,
                      const TrainHyper& hyper, std::uint64_t seed, TrainReport* report) {
  if (train.size() < 2) throw Error("train_mlp: need at least 2 training rows");
  if (static_cast<std::size_t>(train.inputs.rows()) != train.size()) {
    throw Error("train_mlp: inputs and classes differ in length");
  }
  const auto counts = train.class_counts();
  for (int c = 0; c < kNumStrategies; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw Error("train_mlp: no training rows for class " +
                  std::string(to_string(static_cast<Strategy>(c))));
    }
  }
  if (hyper.batch < 2) throw Error("train_mlp: batch size must be >= 2");
  if (!(hyper.lr > 0.0)) throw Error("train_mlp: learning rate must be positive");

  const std::vector<int> hidden =
      !hyper.hidden.empty() ? hyper.hidden
                            : (kind == RouterKind::kScore ? kScoreRouterHidden : kBaselineHidden);
  const double dropout = kind == RouterKind::kBaseline ? hyper.dropout : 0.0;
  RouterModel model = init_router(kind, static_cast<std::size_t>(train.inputs.cols()), hidden,
                                  dropout, seed);

  // Early stopping watches the held-out rows, or the training rows in
  // infer mode when nothing could be held out.
  const TrainingSet& monitor = validation.size() > 0 ? validation : train;

  Rng order_rng(derive_seed(seed, "batch-order"));
  Rng dropout_rng(derive_seed(seed, "dropout"));
  AdamState adam;
  RouterModel best = model;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  TrainReport local;
  local.train_size = train.size();
  local.validation_size = validation.size();

  const std::size_t n = train.size();
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    const auto order = order_rng.permutation(n);
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += hyper.batch) {
      batches.emplace_back(start, std::min(n, start + hyper.batch));
    }
    if (batches.size() > 1 && batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = n;
      batches.pop_back();
    }
    double epoch_loss = 0.0;
    for (const auto& [begin, end] : batches) {
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Eigen::MatrixXd x = gather(train.inputs, rows);
      std::vector<int> y(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) y[i] = train.classes[rows[i]];
      Gradients g;
      Eigen::VectorXd mean;
      Eigen::VectorXd var;
      const double loss = loss_and_gradients(model, x, y, &g, &dropout_rng, &mean, &var);
      if (!std::isfinite(loss)) {
        throw Error("train_mlp: loss diverged at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss * static_cast<double>(rows.size());
      const double mom = model.norm.momentum;
      model.norm.running_mean = (1.0 - mom) * model.norm.running_mean + mom * mean;
      model.norm.running_var = (1.0 - mom) * model.norm.running_var + mom * var;
      adam_update(model, g, adam, hyper.lr);
    }
    epoch_loss /= static_cast<double>(n);
    const double val_loss = cross_entropy(model, monitor.inputs, monitor.classes, Mode::kInfer);
    if (!std::isfinite(val_loss)) {
      throw Error("train_mlp: validation loss diverged at epoch " + std::to_string(epoch));
    }
    local.train_loss.push_back(epoch_loss);
    local.validation_loss.push_back(val_loss);
    local.epochs_run = epoch;
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best = model;
      local.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hyper.patience) {
      local.early_stopped = true;
      break;
    }
  }
  local.best_validation_loss = best_loss;
  log::debug("train_mlp: " + std::to_string(local.epochs_run) + " epochs, best at " +
             std::to_string(local.best_epoch));
  if (report) *report = std::move(local);
  return best;
}

namespace {

struct HeldOut {
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

// Per-label hold-out: round(fraction * n) rows, at least one when n >= 2.
HeldOut split_holdout(const std::vector<std::string>& ids, double fraction, std::uint64_t seed,
                      std::string_view stream) {
  std::vector<std::string> shuffled = ids;
  Rng rng(derive_seed(seed, std::string("holdout:") + std::string(stream)));
  rng.shuffle(std::span<std::string>(shuffled));
  std::size_t h = static_cast<std::size_t>(std::round(fraction * static_cast<double>(ids.size())));
  if (ids.size() >= 2) h = std::max<std::size_t>(h, 1);
  h = std::min(h, ids.size() > 0 ? ids.size() - 1 : 0);
  HeldOut out;
  out.validation.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(h));
  out.train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(h), shuffled.end());
  return out;
}

struct LabelIds {
  std::vector<std::string> id;
  std::vector<std::string> partial;
  std::vector<std::string> ood;
};

LabelIds mlp_ids(const Dataset& data) {
  LabelIds out;
  out.id = data.ids(Split::kMlp, Label::kId);
  out.partial = data.ids(Split::kMlp, Label::kPartialOod);
  out.ood = data.ids(Split::kMlp, Label::kFullOod);
  if (out.id.empty()) throw Error("mlp split has no ID samples");
  if (out.ood.empty()) throw Error("mlp split has no FullOOD samples");
  return out;
}

void append(TrainingSet& set, const Eigen::MatrixXd& rows, Strategy cls) {
  if (rows.rows() == 0) return;
  const Eigen::Index old = set.inputs.rows();
  Eigen::MatrixXd grown(old + rows.rows(), rows.cols());
  if (old > 0) grown.topRows(old) = set.inputs;
  grown.bottomRows(rows.rows()) = rows;
  set.inputs = std::move(grown);
  set.classes.insert(set.classes.end(), static_cast<std::size_t>(rows.rows()),
                     static_cast<int>(cls));
}

// Score-space rows for one portion (train or held-out) of the mlp split.
TrainingSet score_set(const DetectorBundle& bundle, const Dataset& data,
                      const std::vector<std::string>& id, const std::vector<std::string>& partial,
                      const std::vector<std::string>& ood, const TrainHyper& hyper,
                      MixupSpec mixup, std::size_t* synthetic) {
  TrainingSet set;
  if (id.empty() && ood.empty() && partial.empty()) return set;
  const auto reduced_id = bundle.reduce_rows(data, id);
  const auto reduced_ood = bundle.reduce_rows(data, ood);
  const Eigen::MatrixXd id_scores = bundle.score_reduced_rows(reduced_id);
  const Eigen::MatrixXd ood_scores = bundle.score_reduced_rows(reduced_ood);
  append(set, id_scores, Strategy::kAct);
  if (hyper.use_partial_ood && !partial.empty()) {
    append(set, bundle.score_rows(data, partial), Strategy::kThink);
  }
  if (!id.empty() && !ood.empty() && mixup.space == MixupSpace::kScores) {
    const auto mixed = mixup_think(id_scores, ood_scores, mixup);
    append(set, mixed.rows, Strategy::kThink);
    if (synthetic) *synthetic += mixed.lambdas.size();
  } else if (!id.empty() && !ood.empty()) {
    // One lambda and one (ID, OOD) pair per synthetic row across all
    // modalities: mix the concatenated reduced features, then split back.
    std::vector<std::pair<Modality, Eigen::Index>> widths;
    Eigen::Index total = 0;
    for (const auto& [m, rows] : reduced_id) {
      widths.emplace_back(m, rows.cols());
      total += rows.cols();
    }
    auto concat = [&](const std::map<Modality, Eigen::MatrixXd>& parts, Eigen::Index n) {
      Eigen::MatrixXd out(n, total);
      Eigen::Index offset = 0;
      for (const auto& [m, w] : widths) {
        out.middleCols(offset, w) = parts.at(m);
        offset += w;
      }
      return out;
    };
    const auto mixed = mixup_think(concat(reduced_id, static_cast<Eigen::Index>(id.size())),
                                   concat(reduced_ood, static_cast<Eigen::Index>(ood.size())),
                                   mixup);
    std::map<Modality, Eigen::MatrixXd> parts;
    Eigen::Index offset = 0;
    for (const auto& [m, w] : widths) {
      parts[m] = mixed.rows.middleCols(offset, w);
      offset += w;
    }
    append(set, bundle.score_reduced_rows(parts), Strategy::kThink);
    if (synthetic) *synthetic += mixed.lambdas.size();
  }
  append(set, ood_scores, Strategy::kAbstain);
  return set;
}

TrainingSet raw_set(const Dataset& data, const std::vector<Modality>& modalities,
                    const std::vector<std::string>& id, const std::vector<std::string>& partial,
                    const std::vector<std::string>& ood, const TrainHyper& hyper,
                    const MixupSpec& mixup, std::size_t* synthetic) {
  TrainingSet set;
  const Eigen::MatrixXd x_id = baseline_inputs(data, id, modalities);
  const Eigen::MatrixXd x_ood = baseline_inputs(data, ood, modalities);
  append(set, x_id, Strategy::kAct);
  if (hyper.use_partial_ood && !partial.empty()) {
    append(set, baseline_inputs(data, partial, modalities), Strategy::kThink);
  }
  if (x_id.rows() > 0 && x_ood.rows() > 0) {
    const auto mixed = mixup_think(x_id, x_ood, mixup);
    append(set, mixed.rows, Strategy::kThink);
    if (synthetic) *synthetic += mixed.lambdas.size();
  }
  append(set, x_ood, Strategy::kAbstain);
  return set;
}

MixupSpec with_seed(MixupSpec spec, std::uint64_t seed) {
  spec.seed = seed;
  return spec;
}

}  // namespace

RouterModel train_router(const DetectorBundle& bundle, const Dataset& data,
                         const TrainHyper& hyper, const MixupSpec& mixup, std::uint64_t seed,
                         TrainReport* report) {
  if (bundle.config().is_baseline()) throw UsageError("train_router needs a detector bundle");
  const LabelIds ids = mlp_ids(data);
  const auto id = split_holdout(ids.id, hyper.holdout, seed, "ID");
  const auto partial = split_holdout(ids.partial, hyper.holdout, seed, "PartialOOD");
  const auto ood = split_holdout(ids.ood, hyper.holdout, seed, "FullOOD");

  std::size_t synthetic = 0;
  const TrainingSet train = score_set(bundle, data, id.train, partial.train, ood.train, hyper,
                                      with_seed(mixup, derive_seed(mixup.seed, "mixup-train")),
                                      &synthetic);
  MixupSpec val_mixup = with_seed(mixup, derive_seed(mixup.seed, "mixup-holdout"));
  if (mixup.count) {
    val_mixup.count = static_cast<std::size_t>(
        std::round(hyper.holdout * static_cast<double>(*mixup.count)));
  }
  const TrainingSet validation = score_set(bundle, data, id.validation, partial.validation,
                                           ood.validation, hyper, val_mixup, nullptr);
  TrainReport local;
  RouterModel model = train_mlp(RouterKind::kScore, train, validation, hyper, seed, &local);
  for (ScoreId sid : bundle.config().layout) model.input_layout.emplace_back(to_string(sid));
  local.synthetic_think = synthetic;
  if (report) *report = std::move(local);
  return model;
}

std::vector<Modality> baseline_modalities(const Dataset& data) {
  std::vector<Modality> out;
  for (Modality m : {Modality::kVision, Modality::kText, Modality::kFused}) {
    if (data.has(m)) out.push_back(m);
  }
  if (out.empty()) throw Error("dataset has no features for the baseline");
  return out;
}

Eigen::MatrixXd baseline_inputs(const Dataset& data, const std::vector<std::string>& ids,
                                const std::vector<Modality>& modalities) {
  Eigen::Index width = 0;
  for (Modality m : modalities) width += static_cast<Eigen::Index>(data.features(m).dim());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), width);
  Eigen::Index offset = 0;
  for (Modality m : modalities) {
    const auto w = static_cast<Eigen::Index>(data.features(m).dim());
    out.middleCols(offset, w) = data.rows(m, ids);
    offset += w;
  }
  return out;
}

RouterModel train_baseline(const Dataset& data, const TrainHyper& hyper, const MixupSpec& mixup,
                           std::uint64_t seed, TrainReport* report) {
  const LabelIds ids = mlp_ids(data);
  const auto modalities = baseline_modalities(data);
  const auto id = split_holdout(ids.id, hyper.holdout, seed, "ID");
  const auto partial = split_holdout(ids.partial, hyper.holdout, seed, "PartialOOD");
  const auto ood = split_holdout(ids.ood, hyper.holdout, seed, "FullOOD");

  std::size_t synthetic = 0;
  const TrainingSet train =
      raw_set(data, modalities, id.train, partial.train, ood.train, hyper,
              with_seed(mixup, derive_seed(mixup.seed, "mixup-train")), &synthetic);
  MixupSpec val_mixup = with_seed(mixup, derive_seed(mixup.seed, "mixup-holdout"));
  if (mixup.count) {
    val_mixup.count = static_cast<std::size_t>(
        std::round(hyper.holdout * static_cast<double>(*mixup.count)));
  }
  const TrainingSet validation = raw_set(data, modalities, id.validation, partial.validation,
                                         ood.validation, hyper, val_mixup, nullptr);
  TrainReport local;
  RouterModel model = train_mlp(RouterKind::kBaseline, train, validation, hyper, seed, &local);
  for (Modality m : modalities) model.input_layout.emplace_back(to_string(m));
  local.synthetic_think = synthetic;
  if (report) *report = std::move(local);
  return model;
}

}  // namespace ata
