#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ata/ataf.hpp"
#include "ata/dataset.hpp"
#include "ata/error.hpp"
#include "ata/log.hpp"
#include "ata/metrics.hpp"
#include "ata/model_io.hpp"
#include "ata/preprocess.hpp"
#include "ata/rng.hpp"
#include "ata/rollout.hpp"
#include "ata/router.hpp"
#include "ata/scorebundle.hpp"
#include "ata/sweep.hpp"
#include "ata/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Options shared by every subcommand.
struct Common {
  std::uint64_t seed = 0;
  int verbosity = 1;
  bool json = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Master seed; sub-seeds are derived from it")
      ->capture_default_str();
  app->add_option("-v,--verbosity", c.verbosity, "0 silent, 1 warnings, 2 info, 3 debug")
      ->capture_default_str();
  app->add_flag("--json", c.json, "Print a machine-readable JSON summary on stdout");
}

// Resolved configuration of one run, written next to its outputs.
struct RunConfig {
  std::string subcommand;
  json args = json::object();
  json derived_seeds = json::object();
};

void write_run_config(const RunConfig& rc, const Common& c, const fs::path& where) {
  json j;
  j["subcommand"] = rc.subcommand;
  j["version"] = kVersion;
  j["seed"] = c.seed;
  j["verbosity"] = c.verbosity;
  j["args"] = rc.args;
  j["derived_seeds"] = rc.derived_seeds;
  j["seed_derivation"] = "splitmix64(splitmix64(master ^ fnv1a64(stream)) + index)";
  ata::write_json(j, where);
}

// run_config.json inside an output directory, or <file>.run_config.json
// beside an output file.
fs::path run_config_path(const fs::path& out, bool is_dir) {
  if (is_dir) return out / "run_config.json";
  return fs::path(out.string() + ".run_config.json");
}

void emit(const Common& c, const json& summary, const std::string& human) {
  if (c.json) {
    std::cout << summary.dump(2) << '\n';
  } else if (!human.empty()) {
    std::cout << human;
    if (human.back() != '\n') std::cout << '\n';
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ata::Error("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void write_lines(const std::vector<std::string>& lines, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ata::Error("cannot open " + path.string() + " for writing");
  for (const auto& l : lines) out << l << '\n';
}

void write_text(const std::string& text, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ata::Error("cannot open " + path.string() + " for writing");
  out << text;
}

// Copies the feature files of a dataset directory and writes a new manifest.
void write_derived_dataset(const fs::path& in, const fs::path& out, const ata::Manifest& m) {
  if (fs::exists(out) && fs::equivalent(in, out)) {
    throw ata::UsageError("--out must differ from the input dataset directory");
  }
  fs::create_directories(out);
  for (const char* name : {"vision.ataf", "text.ataf", "fused.ataf"}) {
    if (fs::exists(in / name)) {
      fs::copy_file(in / name, out / name, fs::copy_options::overwrite_existing);
    } else {
      fs::remove(out / name);
    }
  }
  ata::write_manifest(m, out / "manifest.jsonl");
}

json split_counts(const ata::Dataset& data) {
  json counts = json::object();
  for (const auto& s : data.samples()) {
    const std::string split = s.split ? std::string(ata::to_string(*s.split)) : "unassigned";
    auto& node = counts[split];
    if (node.is_null()) node = json::object();
    const std::string label(ata::to_string(s.label));
    node[label] = node.value(label, 0) + 1;
  }
  return counts;
}

std::vector<std::uint64_t> parse_seeds(const std::vector<std::uint64_t>& seeds, std::uint64_t master) {
  if (!seeds.empty()) return seeds;
  return {master};
}

ata::DetectorConfig resolve_config(const std::string& name) {
  try {
    return ata::DetectorConfig::named(name);
  } catch (const ata::Error& e) {
    throw ata::UsageError(e.what());
  }
}

json decision_json(const std::string& id, const ata::Decision& d) {
  json j;
  if (!id.empty()) j["id"] = id;
  j["strategy"] = std::string(ata::to_string(d.strategy));
  j["probabilities"] = {{"Act", d.probabilities(0)},
                        {"Think", d.probabilities(1)},
                        {"Abstain", d.probabilities(2)}};
  return j;
}

// Hyperparameter flags shared by train-router, train-baseline and sweeps.
struct TrainFlags {
  ata::TrainHyper hyper;
  double alpha = 0.5;
  double beta = 0.5;
  std::size_t mixup_count = 0;
  std::string mixup_space = "features";
  bool no_partial = false;
};

void add_train_flags(CLI::App* app, TrainFlags& f, bool baseline) {
  app->add_option("--lr", f.hyper.lr, "Adam learning rate")->capture_default_str();
  app->add_option("--batch", f.hyper.batch, "Mini-batch size")->capture_default_str();
  app->add_option("--patience", f.hyper.patience, "Early-stopping patience (epochs)")
      ->capture_default_str();
  app->add_option("--max-epochs", f.hyper.max_epochs, "Epoch cap")->capture_default_str();
  app->add_option("--holdout", f.hyper.holdout, "Per-label hold-out fraction of the mlp split")
      ->capture_default_str();
  app->add_option("--mixup-alpha", f.alpha, "Beta distribution alpha")->capture_default_str();
  app->add_option("--mixup-beta", f.beta, "Beta distribution beta")->capture_default_str();
  app->add_option("--mixup-count", f.mixup_count,
                  "Synthetic Think rows (0 = min(|ID|, |OOD|))")
      ->capture_default_str();
  if (!baseline) {
    app->add_option("--mixup-space", f.mixup_space,
                    "Mix reduced features (re-scored) or score vectors directly")
        ->check(CLI::IsMember({"features", "scores"}))
        ->capture_default_str();
  }
  app->add_flag("--no-partial-ood", f.no_partial,
                "Do not add real PartialOOD samples to the Think class");
  if (baseline) {
    app->add_option("--dropout", f.hyper.dropout, "Dropout after each hidden layer")
        ->capture_default_str();
  }
}

ata::MixupSpec mixup_of(const TrainFlags& f) {
  ata::MixupSpec m;
  m.alpha = f.alpha;
  m.beta = f.beta;
  if (f.mixup_count > 0) m.count = f.mixup_count;
  m.space = f.mixup_space == "scores" ? ata::MixupSpace::kScores : ata::MixupSpace::kFeatures;
  return m;
}

ata::TrainHyper hyper_of(const TrainFlags& f) {
  ata::TrainHyper h = f.hyper;
  h.use_partial_ood = !f.no_partial;
  return h;
}

json train_flags_json(const TrainFlags& f) {
  return {{"lr", f.hyper.lr},
          {"batch", f.hyper.batch},
          {"patience", f.hyper.patience},
          {"max_epochs", f.hyper.max_epochs},
          {"holdout", f.hyper.holdout},
          {"dropout", f.hyper.dropout},
          {"mixup_alpha", f.alpha},
          {"mixup_beta", f.beta},
          {"mixup_count", f.mixup_count},
          {"mixup_space", f.mixup_space},
          {"use_partial_ood", !f.no_partial}};
}

// Detector flags for fit / sweeps. Unset values keep the named config's.
struct DetectorFlags {
  std::string config = "gmm_vision";
  int k = 3;
  double rho = 0.01;
  int starts = 5;
  double var_target = 0.95;
  int max_dims = 64;
};

void add_detector_flags(CLI::App* app, DetectorFlags& f, bool with_config) {
  if (with_config) {
    app->add_option("--config", f.config, "Ablation config name")
        ->capture_default_str()
        ->check(CLI::IsMember(ata::DetectorConfig::known_names()));
  }
  app->add_option("--k", f.k, "GMM components")->capture_default_str();
  app->add_option("--rho", f.rho, "Ledoit-Wolf shrinkage")->capture_default_str();
  app->add_option("--starts", f.starts, "EM random starts")->capture_default_str();
  app->add_option("--var-target", f.var_target, "PCA explained-variance target")
      ->capture_default_str();
  app->add_option("--max-dims", f.max_dims, "PCA dimension cap")->capture_default_str();
}

ata::DetectorConfig detector_config(const DetectorFlags& f, std::uint64_t seed) {
  ata::DetectorConfig c = resolve_config(f.config);
  c.k = f.k;
  c.rho = f.rho;
  c.n_starts = f.starts;
  c.var_target = f.var_target;
  c.max_dims = f.max_dims;
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------- commands

int cmd_pack(const Common& c, const fs::path& vision, const fs::path& text,
             const fs::path& fused, const fs::path& manifest, const fs::path& out) {
  const ata::Manifest m = ata::read_manifest(manifest);
  fs::create_directories(out);
  auto copy = [&](const fs::path& src, const char* name) {
    if (src.empty()) {
      fs::remove(out / name);
      return;
    }
    if (!fs::exists(src)) throw ata::Error("feature file " + src.string() + " not found");
    fs::copy_file(src, out / name, fs::copy_options::overwrite_existing);
  };
  copy(vision, "vision.ataf");
  copy(text, "text.ataf");
  copy(fused, "fused.ataf");
  ata::write_manifest(m, out / "manifest.jsonl");
  const ata::Dataset data = ata::load_dataset(out);  // validates shapes and values
  json summary;
  summary["out"] = out.string();
  summary["samples"] = data.samples().size();
  for (ata::Modality mod : {ata::Modality::kVision, ata::Modality::kText, ata::Modality::kFused}) {
    if (!data.has(mod)) continue;
    const auto& f = data.features(mod);
    summary["modalities"][std::string(ata::to_string(mod))] = {{"rows", f.rows()}, {"dim", f.dim()}};
    if (f.nonstandard_dim()) {
      ata::log::warn(std::string(ata::to_string(mod)) + " dimension " + std::to_string(f.dim()) +
                     " differs from the extractor's " +
                     std::to_string(ata::canonical_dim(mod)));
    }
  }
  RunConfig rc{"pack",
               {{"vision", vision.string()},
                {"text", text.string()},
                {"fused", fused.string()},
                {"manifest", manifest.string()},
                {"out", out.string()}},
               json::object()};
  write_run_config(rc, c, run_config_path(out, true));
  emit(c, summary, "packed " + std::to_string(data.samples().size()) + " samples into " +
                       out.string());
  return 0;
}

int cmd_split(const Common& c, const fs::path& data_dir, const fs::path& out,
              const std::string& stratify) {
  const ata::Dataset data = ata::load_dataset(data_dir);
  ata::PartitionOptions opt;
  opt.seed = c.seed;
  opt.stratify = stratify == "label" ? ata::Stratify::kLabel : ata::Stratify::kLabelSuiteVariant;
  const ata::Manifest m = ata::partition(data.manifest(), opt);
  write_derived_dataset(data_dir, out, m);
  const json counts = split_counts(data.with_manifest(m));
  RunConfig rc{"split",
               {{"data", data_dir.string()}, {"out", out.string()}, {"stratify", stratify}},
               json::object()};
  write_run_config(rc, c, run_config_path(out, true));
  emit(c, {{"out", out.string()}, {"counts", counts}}, "split written to " + out.string() +
                                                          "\n" + counts.dump(2));
  return 0;
}

int cmd_subsample(const Common& c, const fs::path& data_dir, const fs::path& out,
                  double fraction) {
  const ata::Dataset data = ata::load_dataset(data_dir);
  const ata::Manifest m = ata::subsample(data.manifest(), {fraction, c.seed});
  write_derived_dataset(data_dir, out, m);
  const json counts = split_counts(data.with_manifest(m));
  RunConfig rc{"subsample",
               {{"data", data_dir.string()}, {"out", out.string()}, {"fraction", fraction}},
               json::object()};
  write_run_config(rc, c, run_config_path(out, true));
  emit(c, {{"out", out.string()}, {"counts", counts}},
       "subsample written to " + out.string() + "\n" + counts.dump(2));
  return 0;
}

Eigen::MatrixXd read_feature_rows(const fs::path& path) {
  const ata::Tensor t = ata::read_tensor(path);
  if (t.shape().size() != 2) throw ata::Error(path.string() + ": expected a rank-2 tensor");
  Eigen::MatrixXd m = ata::to_matrix(t);
  if (m.rows() == 0 || m.cols() == 0) throw ata::Error(path.string() + ": empty matrix");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!m.row(i).allFinite()) {
      throw ata::Error(path.string() + ": non-finite value in row " + std::to_string(i));
    }
  }
  return m;
}

int cmd_fit_pre(const Common& c, const fs::path& features, const fs::path& out,
                double var_target, int max_dims) {
  const Eigen::MatrixXd x = read_feature_rows(features);
  const std::uint64_t seed = ata::derive_seed(c.seed, "pca");
  const ata::Preprocessor pre = ata::fit_preprocessor(x, {var_target, max_dims, seed});
  ata::save_preprocessor(pre, out);
  RunConfig rc{"fit-pre",
               {{"features", features.string()},
                {"out", out.string()},
                {"var_target", var_target},
                {"max_dims", max_dims}},
               {{"pca", seed}}};
  write_run_config(rc, c, run_config_path(out, true));
  json summary = {{"out", out.string()},
                  {"input_dim", pre.pca.input_dim()},
                  {"output_dim", pre.pca.output_dim()},
                  {"explained_ratio", pre.pca.explained_ratio()},
                  {"limited_by", pre.pca.limited_by},
                  {"zero_std_dims", pre.standardizer.zero_std_dims.size()}};
  std::ostringstream h;
  h << "D=" << pre.pca.input_dim() << " -> D'=" << pre.pca.output_dim() << " (explained "
    << pre.pca.explained_ratio() << ", limited by " << pre.pca.limited_by << ")";
  emit(c, summary, h.str());
  return 0;
}

// Rows of `features`, reduced through `pre` when a preprocessor is given.
Eigen::MatrixXd maybe_reduce(const fs::path& features, const fs::path& pre_dir) {
  Eigen::MatrixXd x = read_feature_rows(features);
  if (pre_dir.empty()) return x;
  return ata::load_preprocessor(pre_dir).reduce_rows(x);
}

int cmd_fit_gmm(const Common& c, const fs::path& features, const fs::path& pre_dir,
                const fs::path& out, int k, double rho, int starts) {
  const Eigen::MatrixXd z = maybe_reduce(features, pre_dir);
  ata::GmmOptions opt;
  opt.k = k;
  opt.rho = rho;
  opt.n_starts = starts;
  opt.seed = c.seed;
  const ata::GmmModel model = ata::fit_gmm(z, opt);
  ata::save_gmm(model, out);
  RunConfig rc{"fit-gmm",
               {{"features", features.string()},
                {"pre", pre_dir.string()},
                {"out", out.string()},
                {"k", k},
                {"rho", rho},
                {"starts", starts}},
               json::object()};
  for (int s = 0; s < starts; ++s) {
    rc.derived_seeds["gmm-start:" + std::to_string(s)] = ata::derive_seed(c.seed, "gmm-start", s);
  }
  write_run_config(rc, c, run_config_path(out, true));
  json summary = ata::gmm_meta_to_json(model.meta);
  summary.erase("starts");
  summary["out"] = out.string();
  std::ostringstream h;
  h << "K=" << k << " fitted on " << z.rows() << "x" << z.cols() << ", best start "
    << model.meta.best_start << ", avg log-likelihood " << model.meta.final_avg_log_likelihood;
  emit(c, summary, h.str());
  return 0;
}

int cmd_fit_knn(const Common& c, const fs::path& features, const fs::path& pre_dir,
                const fs::path& out) {
  const Eigen::MatrixXd z = maybe_reduce(features, pre_dir);
  const ata::NnIndex index(z);
  ata::save_index(index, out);
  RunConfig rc{"fit-knn",
               {{"features", features.string()}, {"pre", pre_dir.string()}, {"out", out.string()}},
               json::object()};
  write_run_config(rc, c, run_config_path(out, true));
  emit(c, {{"out", out.string()}, {"size", index.size()}, {"dim", index.dim()}},
       "indexed " + std::to_string(index.size()) + " points of dimension " +
           std::to_string(index.dim()));
  return 0;
}

int cmd_fit(const Common& c, const fs::path& data_dir, const fs::path& out,
            const DetectorFlags& f) {
  const ata::Dataset data = ata::load_dataset(data_dir);
  const ata::DetectorConfig config = detector_config(f, c.seed);
  const ata::DetectorBundle bundle = ata::fit_bundle(data, config);
  ata::save_bundle(bundle, out);
  RunConfig rc{"fit", {{"data", data_dir.string()}, {"out", out.string()}}, json::object()};
  rc.args["config"] = ata::config_to_json(config);
  for (ata::Modality m : config.pipeline_modalities()) {
    const std::string s(ata::to_string(m));
    rc.derived_seeds["pca:" + s] = ata::derive_seed(config.seed, "pca:" + s);
    rc.derived_seeds["gmm:" + s] = ata::derive_seed(config.seed, "gmm:" + s);
  }
  write_run_config(rc, c, run_config_path(out, true));
  json summary;
  summary["out"] = out.string();
  summary["config"] = ata::config_to_json(config);
  for (const auto& [m, pipe] : bundle.pipelines()) {
    json p = {{"reduced_dim", pipe.preprocessor.pca.output_dim()},
              {"explained_ratio", pipe.preprocessor.pca.explained_ratio()}};
    if (pipe.gmm) p["avg_log_likelihood"] = pipe.gmm->meta.final_avg_log_likelihood;
    summary["pipelines"][std::string(ata::to_string(m))] = p;
  }
  emit(c, summary, "bundle '" + config.name + "' written to " + out.string());
  return 0;
}

// Scores for a dataset split (or all samples) written as float64 ATAF with
// a sibling .ids file.
int cmd_score(const Common& c, const fs::path& bundle_dir, const fs::path& data_dir,
              const std::string& split, const fs::path& out) {
  const ata::DetectorBundle bundle = ata::load_bundle(bundle_dir);
  const ata::Dataset data = ata::load_dataset(data_dir);
  std::vector<std::string> ids;
  if (split == "all") {
    for (const auto& s : data.samples()) ids.push_back(s.id);
  } else {
    ids = data.ids(ata::parse_split(split));
  }
  if (ids.empty()) throw ata::Error("no samples to score in split '" + split + "'");
  const Eigen::MatrixXd scores = bundle.score_rows(data, ids);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  ata::write_matrix(out, scores);
  write_lines(ids, fs::path(out.string() + ".ids"));
  RunConfig rc{"score",
               {{"bundle", bundle_dir.string()},
                {"data", data_dir.string()},
                {"split", split},
                {"out", out.string()}},
               json::object()};
  write_run_config(rc, c, run_config_path(out, false));
  std::vector<std::string> layout;
  for (auto id : bundle.config().layout) layout.emplace_back(ata::to_string(id));
  emit(c, {{"out", out.string()}, {"rows", scores.rows()}, {"layout", layout}},
       "scored " + std::to_string(scores.rows()) + " samples into " + out.string());
  return 0;
}

int cmd_train(const Common& c, bool baseline, const fs::path& data_dir,
              const fs::path& bundle_dir, const fs::path& out, const TrainFlags& f) {
  const ata::Dataset data = ata::load_dataset(data_dir);
  ata::MixupSpec mixup = mixup_of(f);
  mixup.seed = ata::derive_seed(c.seed, "mixup");
  const std::uint64_t router_seed = ata::derive_seed(c.seed, "router");
  ata::TrainReport report;
  ata::RouterModel model;
  if (baseline) {
    model = ata::train_baseline(data, hyper_of(f), mixup, router_seed, &report);
  } else {
    const ata::DetectorBundle bundle = ata::load_bundle(bundle_dir);
    model = ata::train_router(bundle, data, hyper_of(f), mixup, router_seed, &report);
  }
  ata::save_router(model, out);
  ata::write_json(ata::train_report_to_json(report), out / "training.json");
  RunConfig rc{baseline ? "train-baseline" : "train-router",
               {{"data", data_dir.string()}, {"out", out.string()}},
               {{"mixup", mixup.seed}, {"router", router_seed}}};
  if (!baseline) rc.args["bundle"] = bundle_dir.string();
  rc.args["train"] = train_flags_json(f);
  write_run_config(rc, c, run_config_path(out, true));
  json summary = ata::train_report_to_json(report);
  summary.erase("train_loss");
  summary.erase("validation_loss");
  summary["out"] = out.string();
  std::ostringstream h;
  h << (baseline ? "baseline" : "router") << " trained: " << report.epochs_run << " epochs, best "
    << report.best_epoch << " (validation loss " << report.best_validation_loss << ")";
  emit(c, summary, h.str());
  return 0;
}

ata::RawSample read_sample_json(const fs::path& path) {
  const nlohmann::json j = ata::read_json(path);
  ata::RawSample s;
  s.id = j.value("id", "");
  for (ata::Modality m : {ata::Modality::kVision, ata::Modality::kText, ata::Modality::kFused}) {
    const std::string key(ata::to_string(m));
    if (!j.contains(key)) continue;
    const auto v = j.at(key).get<std::vector<double>>();
    s.vectors[m] = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (s.vectors.empty()) throw ata::Error(path.string() + ": sample has no feature vectors");
  return s;
}

int exit_code_for(ata::Strategy s) {
  switch (s) {
    case ata::Strategy::kAct: return 0;
    case ata::Strategy::kThink: return 10;
    case ata::Strategy::kAbstain: return 20;
  }
  return 2;
}

// Runs the --on-think command once with the decision in its environment
// (ATA_SAMPLE_ID, ATA_DECISION). A failing hook is reported, not fatal.
void run_think_hook(const std::string& command, const std::string& id, const json& decision) {
  ::setenv("ATA_SAMPLE_ID", id.c_str(), 1);
  ::setenv("ATA_DECISION", decision.dump().c_str(), 1);
  std::cout.flush();
  const int status = std::system(command.c_str());
  if (status != 0) ata::log::warn("--on-think command exited with status " + std::to_string(status));
}

int cmd_route(const Common& c, const fs::path& bundle_dir, const fs::path& router_dir,
              const fs::path& sample_path, const fs::path& data_dir, const std::string& id,
              const std::string& on_think) {
  const ata::RouterModel router = ata::load_router(router_dir);
  if (sample_path.empty() == data_dir.empty()) {
    throw ata::UsageError("give exactly one of --sample or --data/--id");
  }
  ata::RawSample sample;
  if (!sample_path.empty()) {
    sample = read_sample_json(sample_path);
  } else {
    if (id.empty()) throw ata::UsageError("--data needs --id");
    sample = ata::raw_sample(ata::load_dataset(data_dir), id);
  }
  Eigen::VectorXd input;
  if (router.kind == ata::RouterKind::kBaseline) {
    if (!sample.vectors.count(ata::Modality::kFused) && sample.vectors.count(ata::Modality::kVision) &&
        sample.vectors.count(ata::Modality::kText)) {
      sample.vectors[ata::Modality::kFused] = ata::fuse_features(
          sample.vectors.at(ata::Modality::kVision), sample.vectors.at(ata::Modality::kText));
    }
    std::vector<Eigen::VectorXd> parts;
    Eigen::Index width = 0;
    for (const auto& name : router.input_layout) {
      const ata::Modality m = ata::parse_modality(name);
      auto it = sample.vectors.find(m);
      if (it == sample.vectors.end()) throw ata::Error("sample has no " + name + " features");
      parts.push_back(it->second);
      width += it->second.size();
    }
    input.resize(width);
    Eigen::Index offset = 0;
    for (const auto& p : parts) {
      input.segment(offset, p.size()) = p;
      offset += p.size();
    }
  } else {
    if (bundle_dir.empty()) throw ata::UsageError("a score router needs --bundle");
    const ata::DetectorBundle bundle = ata::load_bundle(bundle_dir);
    input = ata::score_sample(bundle, sample).values;
  }
  const ata::Decision d = ata::decide(ata::forward(router, input));
  const auto out = decision_json(sample.id, d);
  std::cout << out.dump(c.json ? 2 : -1) << '\n';
  if (d.strategy == ata::Strategy::kThink && !on_think.empty()) {
    run_think_hook(on_think, sample.id, out);
  }
  return exit_code_for(d.strategy);
}

struct Predictions {
  std::vector<std::string> ids;
  std::vector<ata::Strategy> truth;
  std::vector<ata::Decision> decisions;
};

Predictions predict_from_scores(const fs::path& scores_path, const fs::path& ids_path,
                                const fs::path& manifest_path, const ata::RouterModel& router) {
  if (router.kind != ata::RouterKind::kScore) {
    throw ata::UsageError("--scores needs a score router, not a baseline");
  }
  const Eigen::MatrixXd scores = ata::read_matrix(scores_path);
  Predictions p;
  p.ids = read_lines(ids_path.empty() ? fs::path(scores_path.string() + ".ids") : ids_path);
  if (static_cast<Eigen::Index>(p.ids.size()) != scores.rows()) {
    throw ata::Error("score file has " + std::to_string(scores.rows()) + " rows but " +
                     std::to_string(p.ids.size()) + " ids");
  }
  std::unordered_map<std::string, ata::Label> label_of;
  for (const auto& s : ata::samples_of(ata::read_manifest(manifest_path))) {
    label_of.emplace(s.id, s.label);
  }
  const Eigen::MatrixXd probs = ata::forward(router, scores, ata::Mode::kInfer);
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    auto it = label_of.find(p.ids[i]);
    if (it == label_of.end()) throw ata::Error("id '" + p.ids[i] + "' not in the manifest");
    p.truth.push_back(ata::strategy_for(it->second));
    p.decisions.push_back(ata::decide(probs.row(static_cast<Eigen::Index>(i)).transpose()));
  }
  return p;
}

int cmd_eval(const Common& c, const fs::path& data_dir, const fs::path& bundle_dir,
             const fs::path& router_dir, const std::string& split, const fs::path& scores,
             const fs::path& ids, const fs::path& manifest, const fs::path& out) {
  const ata::RouterModel router = ata::load_router(router_dir);
  Predictions p;
  if (!scores.empty()) {
    if (manifest.empty()) throw ata::UsageError("--scores needs --manifest");
    p = predict_from_scores(scores, ids, manifest, router);
  } else {
    if (data_dir.empty()) throw ata::UsageError("give --data or --scores");
    const ata::Dataset data = ata::load_dataset(data_dir);
    p.ids = data.ids(ata::parse_split(split));
    if (p.ids.empty()) throw ata::Error("split '" + split + "' is empty");
    std::optional<ata::DetectorBundle> bundle;
    if (router.kind == ata::RouterKind::kScore) {
      if (bundle_dir.empty()) throw ata::UsageError("a score router needs --bundle");
      bundle = ata::load_bundle(bundle_dir);
    }
    p.decisions = ata::route_ids(bundle ? &*bundle : nullptr, router, data, p.ids);
    std::unordered_map<std::string, ata::Label> label_of;
    for (const auto& s : data.samples()) label_of.emplace(s.id, s.label);
    for (const auto& id : p.ids) p.truth.push_back(ata::strategy_for(label_of.at(id)));
  }
  std::vector<ata::Strategy> predicted;
  for (const auto& d : p.decisions) predicted.push_back(d.strategy);
  const ata::ClassificationReport report = ata::classification_report(p.truth, predicted);
  const json rj = ata::report_to_json(report);
  fs::create_directories(out);
  ata::write_json(rj, out / "report.json");
  write_text(ata::confusion_csv(report), out / "confusion.csv");
  {
    std::ofstream pred(out / "predictions.jsonl", std::ios::trunc);
    for (std::size_t i = 0; i < p.ids.size(); ++i) {
      json row = decision_json(p.ids[i], p.decisions[i]);
      row["truth"] = std::string(ata::to_string(p.truth[i]));
      pred << row.dump() << '\n';
    }
  }
  RunConfig rc{"eval",
               {{"data", data_dir.string()},
                {"bundle", bundle_dir.string()},
                {"router", router_dir.string()},
                {"split", split},
                {"scores", scores.string()},
                {"manifest", manifest.string()},
                {"out", out.string()}},
               json::object()};
  write_run_config(rc, c, run_config_path(out, true));
  std::ostringstream h;
  h << "macro F1 " << report.macro_f1 << "  precision " << report.macro_precision << "  recall "
    << report.macro_recall << "  (n = " << report.total << ")\n";
  h << "confusion (rows truth, cols predicted; Act/Think/Abstain):\n";
  for (const auto& row : report.confusion) h << "  " << row[0] << ' ' << row[1] << ' ' << row[2] << '\n';
  emit(c, rj, h.str());
  return 0;
}

ata::PipelineOptions pipeline_options(const DetectorFlags& d, const TrainFlags& t) {
  ata::PipelineOptions o;
  o.config = detector_config(d, 0);
  o.hyper = hyper_of(t);
  o.mixup = mixup_of(t);
  return o;
}

int cmd_sweep_k(const Common& c, const fs::path& data_dir, const fs::path& out,
                const DetectorFlags& d, const TrainFlags& t, const std::vector<int>& ks,
                const std::vector<std::uint64_t>& seeds_in) {
  const ata::Dataset data = ata::load_dataset(data_dir);
  const auto seeds = parse_seeds(seeds_in, c.seed);
  const ata::SweepResult r = ata::sweep_k(data, ks, seeds, pipeline_options(d, t));
  fs::create_directories(out);
  const json j = ata::sweep_to_json(r);
  ata::write_json(j, out / "sweep_k.json");
  write_text(ata::sweep_csv(std::span<const ata::SweepResult>(&r, 1)), out / "sweep_k.csv");
  RunConfig rc{"sweep-k",
               {{"data", data_dir.string()},
                {"out", out.string()},
                {"config", d.config},
                {"k_values", ks},
                {"seeds", seeds},
                {"train", train_flags_json(t)}},
               {{"per_cell", "bundle/mixup/router seeds derived from each sweep seed"}}};
  write_run_config(rc, c, run_config_path(out, true));
  emit(c, j, ata::sweep_csv(std::span<const ata::SweepResult>(&r, 1)));
  return 0;
}

int cmd_sweep_data(const Common& c, const fs::path& data_dir, const fs::path& out,
                   const DetectorFlags& d, const TrainFlags& t,
                   const std::vector<std::string>& configs, const std::vector<double>& fractions,
                   const std::vector<std::uint64_t>& seeds_in) {
  const ata::Dataset data = ata::load_dataset(data_dir);
  const auto seeds = parse_seeds(seeds_in, c.seed);
  std::vector<ata::PipelineOptions> options;
  for (const auto& name : configs) {
    DetectorFlags df = d;
    df.config = name;
    options.push_back(pipeline_options(df, t));
  }
  const auto results = ata::sweep_data(data, fractions, seeds, options);
  fs::create_directories(out);
  json j = json::array();
  for (const auto& r : results) j.push_back(ata::sweep_to_json(r));
  ata::write_json(j, out / "sweep_data.json");
  write_text(ata::sweep_csv(results), out / "sweep_data.csv");
  RunConfig rc{"sweep-data",
               {{"data", data_dir.string()},
                {"out", out.string()},
                {"configs", configs},
                {"fractions", fractions},
                {"seeds", seeds},
                {"train", train_flags_json(t)}},
               {{"per_cell", "subsample/bundle/mixup/router seeds derived from each sweep seed"}}};
  write_run_config(rc, c, run_config_path(out, true));
  emit(c, j, ata::sweep_csv(results));
  return 0;
}

int cmd_simulate(const Common& c, const fs::path& log_path, const fs::path& out) {
  const auto log = ata::read_episode_log(log_path);
  const auto account = ata::rollout_account(log);
  const json j = ata::account_to_json(account);
  const std::string csv = ata::account_csv(account);
  if (!out.empty()) {
    fs::create_directories(out);
    ata::write_json(j, out / "rollout.json");
    write_text(csv, out / "rollout.csv");
    RunConfig rc{"simulate", {{"log", log_path.string()}, {"out", out.string()}}, json::object()};
    write_run_config(rc, c, run_config_path(out, true));
  }
  emit(c, j, csv);
  return 0;
}

int cmd_synth(const Common& c, ata::SynthSpec spec, const fs::path& out) {
  spec.seed = c.seed;
  const ata::SynthBenchmark bench = ata::generate_synthetic(spec);
  ata::save_dataset(bench.dataset, out);
  json params = {{"seed", spec.seed},
                 {"n_per_class", spec.n_per_class},
                 {"vision_dim", spec.vision_dim},
                 {"text_dim", spec.text_dim},
                 {"with_text", spec.with_text},
                 {"clusters", spec.clusters},
                 {"signal_rank", spec.signal_rank},
                 {"noise_variance", spec.noise_variance},
                 {"cluster_separation", spec.cluster_separation},
                 {"ood_shift", spec.ood_shift},
                 {"text_ood_shift", spec.text_ood_shift},
                 {"think_lambda", {spec.think_lambda_min, spec.think_lambda_max}}};
  RunConfig rc{"synth-bench", {{"out", out.string()}, {"spec", params}}, json::object()};
  write_run_config(rc, c, run_config_path(out, true));
  emit(c, {{"out", out.string()}, {"samples", bench.dataset.samples().size()}, {"spec", params}},
       "synthetic benchmark with " + std::to_string(bench.dataset.samples().size()) +
           " samples written to " + out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Act/Think/Abstain routing for VLA policies"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  int code = 0;

  Common common;
  fs::path data, out, bundle, router, features, pre, manifest, vision, text, fused, sample;
  fs::path scores, ids_file, log_path;
  std::string stratify = "label", split = "validation", score_split = "all", sample_id, on_think;
  double fraction = 1.0;
  DetectorFlags det;
  TrainFlags train;
  std::vector<int> k_values = {1, 2, 3, 4, 5};
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> configs = {"gmm_vision"};
  std::vector<double> fractions = ata::kDefaultFractions;
  ata::SynthSpec synth;
  bool no_text = false;

  auto* pack = app.add_subcommand("pack", "Validate feature files + manifest into a dataset dir");
  add_common(pack, common);
  pack->add_option("--vision", vision, "Vision features (ATAF)")->required();
  pack->add_option("--text", text, "Text features (ATAF)");
  pack->add_option("--fused", fused, "Precomputed fused features (ATAF)");
  pack->add_option("--manifest", manifest, "Manifest (JSON lines)")->required();
  pack->add_option("--out", out, "Output dataset directory")->required();
  pack->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_pack(common, vision, text, fused, manifest, out); });

  auto* split_cmd = app.add_subcommand("split", "Stratified detector/mlp/validation partition");
  add_common(split_cmd, common);
  split_cmd->add_option("--data", data, "Dataset directory")->required();
  split_cmd->add_option("--out", out, "Output dataset directory")->required();
  split_cmd->add_option("--stratify", stratify, "Strata")
      ->check(CLI::IsMember({"label", "label-suite-variant"}))
      ->capture_default_str();
  split_cmd->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_split(common, data, out, stratify); });

  auto* sub = app.add_subcommand("subsample", "Subsample the detector and mlp splits");
  add_common(sub, common);
  sub->add_option("--data", data, "Partitioned dataset directory")->required();
  sub->add_option("--out", out, "Output dataset directory")->required();
  sub->add_option("--fraction", fraction, "Fraction kept per (split, label)")->required();
  sub->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_subsample(common, data, out, fraction); });

  auto* fit_pre = app.add_subcommand("fit-pre", "Fit standardizer + PCA on a feature matrix");
  add_common(fit_pre, common);
  fit_pre->add_option("--features", features, "Feature matrix (ATAF)")->required();
  fit_pre->add_option("--out", out, "Output model directory")->required();
  fit_pre->add_option("--var-target", det.var_target, "Explained-variance target")
      ->capture_default_str();
  fit_pre->add_option("--max-dims", det.max_dims, "Dimension cap")->capture_default_str();
  fit_pre->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_fit_pre(common, features, out, det.var_target, det.max_dims); });

  auto* fit_gmm = app.add_subcommand("fit-gmm", "Fit a shrunk full-covariance GMM");
  add_common(fit_gmm, common);
  fit_gmm->add_option("--features", features, "Feature matrix (ATAF)")->required();
  fit_gmm->add_option("--pre", pre, "Preprocessor to reduce the features first");
  fit_gmm->add_option("--out", out, "Output model directory")->required();
  fit_gmm->add_option("--k", det.k, "Components")->capture_default_str();
  fit_gmm->add_option("--rho", det.rho, "Shrinkage")->capture_default_str();
  fit_gmm->add_option("--starts", det.starts, "Random starts")->capture_default_str();
  fit_gmm->callback([&] {
    ata::log::set_verbosity(common.verbosity);
    code = cmd_fit_gmm(common, features, pre, out, det.k, det.rho, det.starts);
  });

  auto* fit_knn = app.add_subcommand("fit-knn", "Build the 1-NN index");
  add_common(fit_knn, common);
  fit_knn->add_option("--features", features, "Feature matrix (ATAF)")->required();
  fit_knn->add_option("--pre", pre, "Preprocessor to reduce the features first");
  fit_knn->add_option("--out", out, "Output index directory")->required();
  fit_knn->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_fit_knn(common, features, pre, out); });

  auto* fit = app.add_subcommand("fit", "Fit a detector bundle on the detector split");
  add_common(fit, common);
  fit->add_option("--data", data, "Partitioned dataset directory")->required();
  fit->add_option("--out", out, "Output bundle directory")->required();
  add_detector_flags(fit, det, true);
  fit->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_fit(common, data, out, det); });

  auto* score = app.add_subcommand("score", "Score samples with a bundle");
  add_common(score, common);
  score->add_option("--bundle", bundle, "Bundle directory")->required();
  score->add_option("--data", data, "Dataset directory")->required();
  score->add_option("--split", score_split, "Split to score, or 'all'")->capture_default_str();
  score->add_option("--out", out, "Output score matrix (ATAF)")->required();
  score->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_score(common, bundle, data, score_split, out); });

  auto* train_router = app.add_subcommand("train-router", "Train the score router");
  add_common(train_router, common);
  train_router->add_option("--data", data, "Partitioned dataset directory")->required();
  train_router->add_option("--bundle", bundle, "Bundle directory")->required();
  train_router->add_option("--out", out, "Output router directory")->required();
  add_train_flags(train_router, train, false);
  train_router->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_train(common, false, data, bundle, out, train); });

  auto* train_base = app.add_subcommand("train-baseline", "Train the raw-feature baseline MLP");
  add_common(train_base, common);
  train_base->add_option("--data", data, "Partitioned dataset directory")->required();
  train_base->add_option("--out", out, "Output router directory")->required();
  add_train_flags(train_base, train, true);
  train_base->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_train(common, true, data, {}, out, train); });

  auto* route = app.add_subcommand(
      "route", "Route one sample; exit code 0 = Act, 10 = Think, 20 = Abstain");
  add_common(route, common);
  route->add_option("--bundle", bundle, "Bundle directory (score routers)");
  route->add_option("--router", router, "Router directory")->required();
  route->add_option("--sample", sample, "Sample JSON {id, vision: [...], text: [...]}");
  route->add_option("--data", data, "Dataset directory (with --id)");
  route->add_option("--id", sample_id, "Sample id in --data");
  route->add_option("--on-think", on_think,
                    "Shell command run once on a Think decision (env ATA_SAMPLE_ID, ATA_DECISION)");
  route->callback([&] {
    ata::log::set_verbosity(common.verbosity);
    code = cmd_route(common, bundle, router, sample, data, sample_id, on_think);
  });

  auto* eval = app.add_subcommand("eval", "Classification report and confusion matrix");
  add_common(eval, common);
  eval->add_option("--router", router, "Router directory")->required();
  eval->add_option("--data", data, "Dataset directory");
  eval->add_option("--bundle", bundle, "Bundle directory (score routers)");
  eval->add_option("--split", split, "Split to evaluate")->capture_default_str();
  eval->add_option("--scores", scores, "Exported score matrix (ATAF) instead of --data");
  eval->add_option("--ids", ids_file, "Row ids of --scores (default <scores>.ids)");
  eval->add_option("--manifest", manifest, "Manifest with the labels of --scores");
  eval->add_option("--out", out, "Output directory")->required();
  eval->callback([&] {
    ata::log::set_verbosity(common.verbosity);
    code = cmd_eval(common, data, bundle, router, split, scores, ids_file, manifest, out);
  });

  auto* sweep_k = app.add_subcommand("sweep-k", "Macro F1 across GMM component counts");
  add_common(sweep_k, common);
  sweep_k->add_option("--data", data, "Partitioned dataset directory")->required();
  sweep_k->add_option("--out", out, "Output directory")->required();
  sweep_k->add_option("--k-values", k_values, "Component counts")->delimiter(',')->capture_default_str();
  sweep_k->add_option("--seeds", seeds, "Seeds (default: --seed)")->delimiter(',');
  add_detector_flags(sweep_k, det, true);
  add_train_flags(sweep_k, train, false);
  sweep_k->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_sweep_k(common, data, out, det, train, k_values, seeds); });

  auto* sweep_data = app.add_subcommand("sweep-data", "Macro F1 across training-set fractions");
  add_common(sweep_data, common);
  sweep_data->add_option("--data", data, "Partitioned dataset directory")->required();
  sweep_data->add_option("--out", out, "Output directory")->required();
  sweep_data->add_option("--configs", configs, "Config names")
      ->delimiter(',')
      ->check(CLI::IsMember(ata::DetectorConfig::known_names()))
      ->capture_default_str();
  sweep_data->add_option("--fractions", fractions, "Fractions in (0, 1]")
      ->delimiter(',')
      ->capture_default_str();
  sweep_data->add_option("--seeds", seeds, "Seeds (default: --seed)")->delimiter(',');
  add_detector_flags(sweep_data, det, false);
  add_train_flags(sweep_data, train, true);
  sweep_data->callback([&] {
    ata::log::set_verbosity(common.verbosity);
    code = cmd_sweep_data(common, data, out, det, train, configs, fractions, seeds);
  });

  auto* simulate = app.add_subcommand("simulate", "Table-style rollout accounting of an episode log");
  add_common(simulate, common);
  simulate->add_option("--log", log_path, "Episode log (JSON lines)")->required();
  simulate->add_option("--out", out, "Output directory for rollout.json / rollout.csv");
  simulate->callback([&] {
    ata::log::set_verbosity(common.verbosity); code = cmd_simulate(common, log_path, out); });

  auto* synth_cmd = app.add_subcommand("synth-bench", "Generate the seeded synthetic benchmark");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--out", out, "Output dataset directory")->required();
  synth_cmd->add_option("--n-per-class", synth.n_per_class, "Samples per label")
      ->capture_default_str();
  synth_cmd->add_option("--clusters", synth.clusters, "ID clusters")->capture_default_str();
  synth_cmd->add_option("--separation", synth.cluster_separation,
                        "Cluster separation in within-cluster std")
      ->capture_default_str();
  synth_cmd->add_option("--ood-shift", synth.ood_shift, "FullOOD shift in sigma")
      ->capture_default_str();
  synth_cmd->add_option("--vision-dim", synth.vision_dim, "Vision feature dimension")
      ->capture_default_str();
  synth_cmd->add_option("--text-dim", synth.text_dim, "Text feature dimension")
      ->capture_default_str();
  synth_cmd->add_flag("--no-text", no_text, "Vision features only");
  synth_cmd->callback([&] {
    ata::log::set_verbosity(common.verbosity);
    synth.with_text = !no_text;
    code = cmd_synth(common, synth, out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ata::UsageError& e) {
    std::cerr << "ata: " << e.what() << '\n';
    return 1;
  } catch (const ata::Error& e) {
    std::cerr << "ata: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "ata: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ata: " << e.what() << '\n';
    return 2;
  }
  return code;
}
