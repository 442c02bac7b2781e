#include "ata/model_io.hpp"

#include <cstring>
#include <fstream>

#include "ata/ataf.hpp"
#include "ata/error.hpp"

namespace fs = std::filesystem;

namespace ata {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::ordered_json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

namespace {

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("model directory " + dir.string() + " not found");
}

const char* intern_limited_by(const std::string& s) {
  for (const char* known : {"variance", "max_dims", "rank", "samples"}) {
    if (s == known) return known;
  }
  throw Error("unknown PCA limit '" + s + "'");
}

}  // namespace

// ------------------------------------------------------------ preprocessor

void save_preprocessor(const Preprocessor& pre, const fs::path& dir) {
  fs::create_directories(dir);
  write_vector(dir / "mean.ataf", pre.standardizer.mean);
  write_vector(dir / "std.ataf", pre.standardizer.std);
  write_matrix(dir / "components.ataf", pre.pca.components);
  write_vector(dir / "explained_variance.ataf", pre.pca.explained_variance);
  write_vector(dir / "center.ataf", pre.pca.center);
  nlohmann::ordered_json meta;
  meta["var_target"] = pre.pca.options.var_target;
  meta["max_dims"] = pre.pca.options.max_dims;
  meta["seed"] = pre.pca.options.seed;
  meta["input_dim"] = pre.pca.input_dim();
  meta["output_dim"] = pre.pca.output_dim();
  meta["explained_ratio"] = pre.pca.explained_ratio();
  meta["total_variance"] = pre.pca.total_variance;
  meta["limited_by"] = pre.pca.limited_by;
  meta["zero_std_dims"] = pre.standardizer.zero_std_dims;
  meta["std_convention"] = "population";
  meta["variance_convention"] = "sample";
  meta["sign_convention"] = "largest_abs_entry_positive";
  write_json(meta, dir / "meta.json");
}

Preprocessor load_preprocessor(const fs::path& dir) {
  require_dir(dir);
  const auto meta = read_json(dir / "meta.json");
  Preprocessor pre;
  pre.standardizer.mean = read_vector(dir / "mean.ataf");
  pre.standardizer.std = read_vector(dir / "std.ataf");
  pre.standardizer.zero_std_dims = meta.at("zero_std_dims").get<std::vector<Eigen::Index>>();
  pre.pca.components = read_matrix(dir / "components.ataf");
  pre.pca.explained_variance = read_vector(dir / "explained_variance.ataf");
  pre.pca.center = read_vector(dir / "center.ataf");
  pre.pca.total_variance = meta.at("total_variance").get<double>();
  pre.pca.options.var_target = meta.at("var_target").get<double>();
  pre.pca.options.max_dims = meta.at("max_dims").get<int>();
  pre.pca.options.seed = meta.at("seed").get<std::uint64_t>();
  pre.pca.limited_by = intern_limited_by(meta.at("limited_by").get<std::string>());
  const auto d = pre.standardizer.mean.size();
  if (pre.standardizer.std.size() != d || pre.pca.components.cols() != d ||
      pre.pca.center.size() != d ||
      pre.pca.explained_variance.size() != pre.pca.components.rows()) {
    throw Error("preprocessor in " + dir.string() + " has inconsistent shapes");
  }
  return pre;
}

// --------------------------------------------------------------------- gmm

nlohmann::ordered_json gmm_meta_to_json(const GmmFitMeta& m) {
  nlohmann::ordered_json j;
  j["n_starts"] = m.n_starts;
  j["iterations"] = m.iterations;
  j["final_avg_log_likelihood"] = m.final_avg_log_likelihood;
  j["seed"] = m.seed;
  j["best_start"] = m.best_start;
  j["reseeds"] = m.reseeds;
  nlohmann::ordered_json starts = nlohmann::ordered_json::array();
  for (const auto& s : m.starts) {
    starts.push_back({{"seed", s.seed},
                      {"iterations", s.iterations},
                      {"converged", s.converged},
                      {"stopped_on_decrease", s.stopped_on_decrease},
                      {"reseed_iterations", s.reseed_iterations},
                      {"avg_log_likelihood", s.avg_log_likelihood}});
  }
  j["starts"] = starts;
  return j;
}

void save_gmm(const GmmModel& model, const fs::path& dir) {
  if (model.components.empty()) throw Error("cannot save an empty GMM");
  fs::create_directories(dir);
  const auto k = static_cast<Eigen::Index>(model.components.size());
  const auto d = static_cast<Eigen::Index>(model.dim());
  Eigen::MatrixXd means(k, d);
  Eigen::VectorXd weights(k);
  // Factors stacked as (k*d) x d.
  Eigen::MatrixXd factors(k * d, d);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& comp = model.components[static_cast<std::size_t>(c)];
    means.row(c) = comp.mean().transpose();
    weights(c) = comp.weight();
    factors.middleRows(c * d, d) = comp.factor();
  }
  write_matrix(dir / "means.ataf", means);
  write_vector(dir / "weights.ataf", weights);
  write_matrix(dir / "factors.ataf", factors);
  nlohmann::ordered_json meta;
  meta["k"] = k;
  meta["dim"] = d;
  meta["rho"] = model.rho;
  meta["covariance"] = "full";
  meta["factor"] = "lower_cholesky";
  meta["fit"] = gmm_meta_to_json(model.meta);
  write_json(meta, dir / "meta.json");
}

GmmModel load_gmm(const fs::path& dir) {
  require_dir(dir);
  const auto meta = read_json(dir / "meta.json");
  const Eigen::MatrixXd means = read_matrix(dir / "means.ataf");
  const Eigen::VectorXd weights = read_vector(dir / "weights.ataf");
  const Eigen::MatrixXd factors = read_matrix(dir / "factors.ataf");
  const Eigen::Index k = means.rows();
  const Eigen::Index d = means.cols();
  if (weights.size() != k || factors.rows() != k * d || factors.cols() != d) {
    throw Error("GMM in " + dir.string() + " has inconsistent shapes");
  }
  GmmModel model;
  model.rho = meta.at("rho").get<double>();
  for (Eigen::Index c = 0; c < k; ++c) {
    model.components.push_back(GaussianComponent::from_factor(
        means.row(c).transpose(), factors.middleRows(c * d, d), weights(c)));
  }
  const auto& fit = meta.at("fit");
  model.meta.n_starts = fit.at("n_starts").get<int>();
  model.meta.iterations = fit.at("iterations").get<int>();
  model.meta.final_avg_log_likelihood = fit.at("final_avg_log_likelihood").get<double>();
  model.meta.seed = fit.at("seed").get<std::uint64_t>();
  model.meta.best_start = fit.at("best_start").get<int>();
  model.meta.reseeds = fit.at("reseeds").get<int>();
  for (const auto& s : fit.at("starts")) {
    GmmStartTrace t;
    t.seed = s.at("seed").get<std::uint64_t>();
    t.iterations = s.at("iterations").get<int>();
    t.converged = s.at("converged").get<bool>();
    t.stopped_on_decrease = s.value("stopped_on_decrease", false);
    t.reseed_iterations = s.at("reseed_iterations").get<std::vector<int>>();
    t.avg_log_likelihood = s.at("avg_log_likelihood").get<std::vector<double>>();
    model.meta.starts.push_back(std::move(t));
  }
  return model;
}

// --------------------------------------------------------------------- knn

void save_index(const NnIndex& index, const fs::path& dir) {
  fs::create_directories(dir);
  write_matrix(dir / "points.ataf", index.points());
  nlohmann::ordered_json meta;
  meta["size"] = index.size();
  meta["dim"] = index.dim();
  meta["metric"] = "euclidean";
  write_json(meta, dir / "meta.json");
}

NnIndex load_index(const fs::path& dir) {
  require_dir(dir);
  return NnIndex(read_matrix(dir / "points.ataf"));
}

// ------------------------------------------------------------------ bundle

void save_bundle(const DetectorBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::ordered_json config = config_to_json(bundle.config());
  write_json(config, dir / "config.json");
  for (const auto& [m, pipe] : bundle.pipelines()) {
    const fs::path sub = dir / std::string(to_string(m));
    fs::remove_all(sub);
    save_preprocessor(pipe.preprocessor, sub / "pre");
    if (pipe.gmm) save_gmm(*pipe.gmm, sub / "gmm");
  }
  fs::remove_all(dir / "knn");
  if (bundle.knn()) save_index(*bundle.knn(), dir / "knn");
}

DetectorBundle load_bundle(const fs::path& dir) {
  require_dir(dir);
  const DetectorConfig config = config_from_json(read_json(dir / "config.json"));
  std::map<Modality, ModalityPipeline> pipelines;
  for (Modality m : config.pipeline_modalities()) {
    const fs::path sub = dir / std::string(to_string(m));
    ModalityPipeline pipe;
    pipe.preprocessor = load_preprocessor(sub / "pre");
    if (fs::exists(sub / "gmm")) pipe.gmm = load_gmm(sub / "gmm");
    pipelines.emplace(m, std::move(pipe));
  }
  std::optional<NnIndex> knn;
  if (fs::exists(dir / "knn")) knn.emplace(load_index(dir / "knn"));
  return DetectorBundle(config, std::move(pipelines), std::move(knn));
}

// ------------------------------------------------------------------ router

nlohmann::ordered_json train_report_to_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  j["best_validation_loss"] = r.best_validation_loss;
  j["early_stopped"] = r.early_stopped;
  j["train_size"] = r.train_size;
  j["validation_size"] = r.validation_size;
  j["synthetic_think"] = r.synthetic_think;
  j["train_loss"] = r.train_loss;
  j["validation_loss"] = r.validation_loss;
  return j;
}

void save_router(const RouterModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().filename().string().rfind("layer", 0) == 0) fs::remove(entry.path());
  }
  write_vector(dir / "running_mean.ataf", model.norm.running_mean);
  write_vector(dir / "running_var.ataf", model.norm.running_var);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const std::string stem = "layer" + std::to_string(i);
    write_matrix(dir / (stem + "_weight.ataf"), model.layers[i].weight);
    write_vector(dir / (stem + "_bias.ataf"), model.layers[i].bias);
  }
  nlohmann::ordered_json meta;
  meta["kind"] = model.kind == RouterKind::kScore ? "score" : "baseline";
  meta["input_dim"] = model.input_dim();
  meta["hidden"] = model.hidden_sizes();
  meta["layers"] = model.layers.size();
  meta["dropout"] = model.dropout;
  meta["batchnorm_momentum"] = model.norm.momentum;
  meta["batchnorm_epsilon"] = model.norm.epsilon;
  meta["input_layout"] = model.input_layout;
  meta["classes"] = {"Act", "Think", "Abstain"};
  meta["seed"] = model.seed;
  write_json(meta, dir / "meta.json");
}

RouterModel load_router(const fs::path& dir) {
  require_dir(dir);
  const auto meta = read_json(dir / "meta.json");
  RouterModel model;
  const auto kind = meta.at("kind").get<std::string>();
  if (kind == "score") {
    model.kind = RouterKind::kScore;
  } else if (kind == "baseline") {
    model.kind = RouterKind::kBaseline;
  } else {
    throw Error("unknown router kind '" + kind + "'");
  }
  model.norm.running_mean = read_vector(dir / "running_mean.ataf");
  model.norm.running_var = read_vector(dir / "running_var.ataf");
  model.norm.momentum = meta.at("batchnorm_momentum").get<double>();
  model.norm.epsilon = meta.at("batchnorm_epsilon").get<double>();
  model.dropout = meta.at("dropout").get<double>();
  model.input_layout = meta.at("input_layout").get<std::vector<std::string>>();
  model.seed = meta.at("seed").get<std::uint64_t>();
  const auto n = meta.at("layers").get<std::size_t>();
  Eigen::Index fan_in = model.norm.running_mean.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::string stem = "layer" + std::to_string(i);
    DenseLayer layer{read_matrix(dir / (stem + "_weight.ataf")),
                     read_vector(dir / (stem + "_bias.ataf"))};
    if (layer.weight.cols() != fan_in || layer.bias.size() != layer.weight.rows()) {
      throw Error("router layer " + std::to_string(i) + " in " + dir.string() +
                  " has inconsistent shapes");
    }
    fan_in = layer.weight.rows();
    model.layers.push_back(std::move(layer));
  }
  if (fan_in != kNumStrategies) throw Error("router output is not 3-way");
  return model;
}

}  // namespace ata
