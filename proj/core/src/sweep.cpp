#include "ata/sweep.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "ata/error.hpp"
#include "ata/log.hpp"

namespace ata {

std::vector<Decision> route_ids(const DetectorBundle* bundle, const RouterModel& router,
                                const Dataset& data, const std::vector<std::string>& ids) {
  Eigen::MatrixXd inputs;
  if (router.kind == RouterKind::kBaseline) {
    std::vector<Modality> modalities;
    for (const auto& name : router.input_layout) modalities.push_back(parse_modality(name));
    inputs = baseline_inputs(data, ids, modalities);
  } else {
    if (!bundle) throw UsageError("a score router needs a detector bundle");
    std::vector<std::string> layout;
    for (ScoreId id : bundle->config().layout) layout.emplace_back(to_string(id));
    if (layout != router.input_layout) {
      throw Error("router was trained on a different score layout than the bundle provides");
    }
    inputs = bundle->score_rows(data, ids);
  }
  const Eigen::MatrixXd probs = forward(router, inputs, Mode::kInfer);
  std::vector<Decision> out;
  out.reserve(ids.size());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) out.push_back(decide(probs.row(i).transpose()));
  return out;
}

PipelineResult run_pipeline(const Dataset& data, const PipelineOptions& options,
                            std::uint64_t seed) {
  DetectorConfig config = options.config;
  config.seed = derive_seed(seed, "bundle");
  MixupSpec mixup = options.mixup;
  mixup.seed = derive_seed(seed, "mixup");
  const std::uint64_t router_seed = derive_seed(seed, "router");

  PipelineResult result;
  std::optional<DetectorBundle> bundle;
  RouterModel router;
  if (config.is_baseline()) {
    router = train_baseline(data, options.hyper, mixup, router_seed, &result.train);
  } else {
    bundle = fit_bundle(data, config);
    router = train_router(*bundle, data, options.hyper, mixup, router_seed, &result.train);
  }
  result.ids = data.ids(options.eval_split);
  if (result.ids.empty()) {
    throw Error(std::string(to_string(options.eval_split)) + " split is empty");
  }
  const auto decisions = route_ids(bundle ? &*bundle : nullptr, router, data, result.ids);
  std::unordered_map<std::string, Label> label_of;
  for (const auto& s : data.samples()) label_of.emplace(s.id, s.label);
  for (std::size_t i = 0; i < result.ids.size(); ++i) {
    result.truth.push_back(strategy_for(label_of.at(result.ids[i])));
    result.predicted.push_back(decisions[i].strategy);
  }
  result.report = classification_report(result.truth, result.predicted);
  return result;
}

namespace {

SweepPoint summarize(double value, std::span<const SweepCell> cells) {
  SweepPoint p;
  p.axis_value = value;
  double sum = 0.0;
  for (const auto& c : cells) {
    if (c.macro_f1) {
      ++p.completed;
      sum += *c.macro_f1;
    } else {
      ++p.failed;
    }
  }
  if (p.completed == 0) {
    p.mean_f1 = std::numeric_limits<double>::quiet_NaN();
    p.std_f1 = std::numeric_limits<double>::quiet_NaN();
    return p;
  }
  p.mean_f1 = sum / static_cast<double>(p.completed);
  double ss = 0.0;
  for (const auto& c : cells) {
    if (c.macro_f1) ss += (*c.macro_f1 - p.mean_f1) * (*c.macro_f1 - p.mean_f1);
  }
  p.std_f1 = p.completed > 1 ? std::sqrt(ss / static_cast<double>(p.completed - 1)) : 0.0;
  return p;
}

}  // namespace

SweepResult sweep_k(const Dataset& data, std::span<const int> k_values,
                    std::span<const std::uint64_t> seeds, const PipelineOptions& base) {
  if (k_values.empty()) throw UsageError("sweep_k: k_values is empty");
  if (seeds.empty()) throw UsageError("sweep_k: no seeds");
  if (base.config.is_baseline()) throw UsageError("sweep_k needs a GMM config");
  SweepResult result;
  result.axis = "k";
  result.config = base.config.name;
  for (int k : k_values) {
    std::vector<SweepCell> cells;
    for (std::uint64_t seed : seeds) {
      PipelineOptions opt = base;
      opt.config.k = k;
      const auto run = run_pipeline(data, opt, seed);
      cells.push_back({static_cast<double>(k), seed, run.report.macro_f1, {}});
      log::info("sweep-k " + base.config.name + " k=" + std::to_string(k) +
                " seed=" + std::to_string(seed) + " macro_f1=" +
                std::to_string(run.report.macro_f1));
    }
    result.points.push_back(summarize(static_cast<double>(k), cells));
    result.cells.insert(result.cells.end(), cells.begin(), cells.end());
  }
  return result;
}

std::vector<SweepResult> sweep_data(const Dataset& data, std::span<const double> fractions,
                                    std::span<const std::uint64_t> seeds,
                                    std::span<const PipelineOptions> configs) {
  if (fractions.empty()) throw UsageError("sweep_data: no fractions");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw UsageError("sweep_data: fractions must lie in (0, 1]");
  }
  if (seeds.empty()) throw UsageError("sweep_data: no seeds");
  if (configs.empty()) throw UsageError("sweep_data: no configs");
  std::vector<SweepResult> results;
  for (const auto& options : configs) {
    SweepResult result;
    result.axis = "fraction";
    result.config = options.config.name;
    for (double f : fractions) {
      std::vector<SweepCell> cells;
      for (std::uint64_t seed : seeds) {
        SweepCell cell{f, seed, std::nullopt, {}};
        try {
          const Manifest sub =
              subsample(data.manifest(), SubsampleSpec{f, derive_seed(seed, "subsample")});
          cell.macro_f1 = run_pipeline(data.with_manifest(sub), options, seed).report.macro_f1;
        } catch (const Error& e) {
          cell.error = e.what();
          log::warn("sweep-data " + options.config.name + " fraction=" + std::to_string(f) +
                    " seed=" + std::to_string(seed) + " failed: " + cell.error);
        }
        cells.push_back(std::move(cell));
      }
      result.points.push_back(summarize(f, cells));
      result.cells.insert(result.cells.end(), cells.begin(), cells.end());
    }
    results.push_back(std::move(result));
  }
  return results;
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

nlohmann::ordered_json sweep_to_json(const SweepResult& r) {
  nlohmann::ordered_json j;
  j["axis"] = r.axis;
  j["config"] = r.config;
  nlohmann::ordered_json points = nlohmann::ordered_json::array();
  for (const auto& p : r.points) {
    points.push_back({{"value", p.axis_value},
                      {"mean_f1", number_or_null(p.mean_f1)},
                      {"std_f1", number_or_null(p.std_f1)},
                      {"completed", p.completed},
                      {"failed", p.failed}});
  }
  j["points"] = points;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : r.cells) {
    nlohmann::ordered_json cell;
    cell["value"] = c.axis_value;
    cell["seed"] = c.seed;
    cell["macro_f1"] = c.macro_f1 ? nlohmann::ordered_json(*c.macro_f1) : nlohmann::ordered_json(nullptr);
    if (!c.error.empty()) cell["error"] = c.error;
    cells.push_back(cell);
  }
  j["cells"] = cells;
  return j;
}

std::string sweep_csv(std::span<const SweepResult> results) {
  std::ostringstream out;
  out.precision(17);
  out << "config,axis,value,mean_f1,std_f1,completed,failed\n";
  for (const auto& r : results) {
    for (const auto& p : r.points) {
      out << r.config << ',' << r.axis << ',' << p.axis_value << ',';
      if (!std::isnan(p.mean_f1)) out << p.mean_f1;
      out << ',';
      if (!std::isnan(p.std_f1)) out << p.std_f1;
      out << ',' << p.completed << ',' << p.failed << '\n';
    }
  }
  return out.str();
}

}  // namespace ata
