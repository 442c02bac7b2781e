#include "ata/scorebundle.hpp"

#include <algorithm>
#include <cmath>

#include "ata/error.hpp"
#include "ata/rng.hpp"

namespace ata {

std::string_view to_string(ScoreId id) {
  switch (id) {
    case ScoreId::kGmmVision: return "S_GMM_V";
    case ScoreId::kGmmText: return "S_GMM_L";
    case ScoreId::kGmmFused: return "S_GMM_F";
    case ScoreId::kKnnVision: return "S_kNN_V";
  }
  return "?";
}

ScoreId parse_score_id(std::string_view text) {
  if (text == "S_GMM_V") return ScoreId::kGmmVision;
  if (text == "S_GMM_L") return ScoreId::kGmmText;
  if (text == "S_GMM_F") return ScoreId::kGmmFused;
  if (text == "S_kNN_V") return ScoreId::kKnnVision;
  throw Error("unknown score identifier '" + std::string(text) + "'");
}

Modality modality_of(ScoreId id) {
  switch (id) {
    case ScoreId::kGmmVision:
    case ScoreId::kKnnVision: return Modality::kVision;
    case ScoreId::kGmmText: return Modality::kText;
    case ScoreId::kGmmFused: return Modality::kFused;
  }
  return Modality::kVision;
}

namespace {

bool is_gmm(ScoreId id) { return id != ScoreId::kKnnVision; }

const std::vector<std::pair<std::string, std::vector<ScoreId>>>& registry() {
  static const std::vector<std::pair<std::string, std::vector<ScoreId>>> table = {
      {"baseline_raw", {}},
      {"gmm_vision", {ScoreId::kGmmVision}},
      {"gmm_text", {ScoreId::kGmmText}},
      {"gmm_fused", {ScoreId::kGmmFused}},
      {"knn_vision", {ScoreId::kKnnVision}},
      {"gmm_all_plus_knn",
       {ScoreId::kGmmVision, ScoreId::kGmmText, ScoreId::kGmmFused, ScoreId::kKnnVision}},
      {"gmm_vision_plus_knn", {ScoreId::kGmmVision, ScoreId::kKnnVision}},
  };
  return table;
}

}  // namespace

std::vector<Modality> DetectorConfig::pipeline_modalities() const {
  std::vector<Modality> out;
  for (Modality m : {Modality::kVision, Modality::kText, Modality::kFused}) {
    if (std::any_of(layout.begin(), layout.end(),
                    [&](ScoreId id) { return modality_of(id) == m; })) {
      out.push_back(m);
    }
  }
  return out;
}

std::vector<Modality> DetectorConfig::input_modalities() const {
  if (is_baseline()) return {Modality::kVision, Modality::kText};
  bool vision = false;
  bool text = false;
  for (Modality m : pipeline_modalities()) {
    vision |= m == Modality::kVision || m == Modality::kFused;
    text |= m == Modality::kText || m == Modality::kFused;
  }
  std::vector<Modality> out;
  if (vision) out.push_back(Modality::kVision);
  if (text) out.push_back(Modality::kText);
  return out;
}

DetectorConfig DetectorConfig::named(std::string_view name) {
  for (const auto& [n, layout] : registry()) {
    if (n == name) {
      DetectorConfig c;
      c.name = n;
      c.layout = layout;
      return c;
    }
  }
  throw UsageError("unknown detector config '" + std::string(name) + "'");
}

const std::vector<std::string>& DetectorConfig::known_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& entry : registry()) v.push_back(entry.first);
    return v;
  }();
  return names;
}

nlohmann::json config_to_json(const DetectorConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  std::vector<std::string> layout;
  for (auto id : c.layout) layout.emplace_back(to_string(id));
  j["score_layout"] = layout;
  j["k"] = c.k;
  j["rho"] = c.rho;
  j["n_starts"] = c.n_starts;
  j["seed"] = c.seed;
  j["var_target"] = c.var_target;
  j["max_dims"] = c.max_dims;
  j["knn_k"] = c.knn_k;
  return j;
}

DetectorConfig config_from_json(const nlohmann::json& j) {
  DetectorConfig c;
  c.name = j.at("name").get<std::string>();
  for (const auto& s : j.at("score_layout")) c.layout.push_back(parse_score_id(s.get<std::string>()));
  c.k = j.value("k", c.k);
  c.rho = j.value("rho", c.rho);
  c.n_starts = j.value("n_starts", c.n_starts);
  c.seed = j.value("seed", c.seed);
  c.var_target = j.value("var_target", c.var_target);
  c.max_dims = j.value("max_dims", c.max_dims);
  c.knn_k = j.value("knn_k", c.knn_k);
  return c;
}

// ------------------------------------------------------------------ bundle

DetectorBundle::DetectorBundle(DetectorConfig config,
                               std::map<Modality, ModalityPipeline> pipelines,
                               std::optional<NnIndex> knn)
    : config_(std::move(config)), pipelines_(std::move(pipelines)), knn_(std::move(knn)) {
  check();
}

void DetectorBundle::check() const {
  for (ScoreId id : config_.layout) {
    const Modality m = modality_of(id);
    auto it = pipelines_.find(m);
    if (it == pipelines_.end()) {
      throw Error("bundle has no " + std::string(to_string(m)) + " pipeline for " +
                  std::string(to_string(id)));
    }
    if (is_gmm(id) && !it->second.gmm) {
      throw Error("bundle has no GMM backing " + std::string(to_string(id)));
    }
    if (id == ScoreId::kKnnVision && !knn_) {
      throw Error("bundle has no NN index backing S_kNN_V");
    }
  }
}

const ModalityPipeline& DetectorBundle::pipeline(Modality m) const {
  auto it = pipelines_.find(m);
  if (it == pipelines_.end()) {
    throw Error("bundle has no " + std::string(to_string(m)) + " pipeline");
  }
  return it->second;
}

namespace {

const Eigen::VectorXd& require(const RawSample& sample, Modality m) {
  auto it = sample.vectors.find(m);
  if (it == sample.vectors.end()) {
    throw Error("sample '" + sample.id + "' is missing " + std::string(to_string(m)) +
                " features");
  }
  return it->second;
}

}  // namespace

ReducedSample DetectorBundle::reduce(const RawSample& sample) const {
  ReducedSample out;
  for (const auto& [m, pipe] : pipelines_) {
    Eigen::VectorXd raw;
    if (m == Modality::kFused && !sample.vectors.count(Modality::kFused)) {
      raw = fuse_features(require(sample, Modality::kVision), require(sample, Modality::kText));
    } else {
      raw = require(sample, m);
    }
    if (!raw.allFinite()) {
      throw Error("sample '" + sample.id + "' has non-finite " + std::string(to_string(m)) +
                  " features");
    }
    out[m] = pipe.preprocessor.reduce(raw);
  }
  return out;
}

ScoreVector DetectorBundle::score_reduced(const ReducedSample& reduced, std::string id) const {
  ScoreVector out;
  out.id = std::move(id);
  out.values.resize(static_cast<Eigen::Index>(config_.layout.size()));
  for (std::size_t i = 0; i < config_.layout.size(); ++i) {
    const ScoreId sid = config_.layout[i];
    const Modality m = modality_of(sid);
    auto it = reduced.find(m);
    if (it == reduced.end()) {
      throw Error("no reduced " + std::string(to_string(m)) + " features for " +
                  std::string(to_string(sid)));
    }
    const double v = sid == ScoreId::kKnnVision
                         ? knn_->score(it->second, config_.knn_k)
                         : score_gmm(*pipeline(m).gmm, it->second);
    if (!std::isfinite(v) || v < 0.0) {
      throw Error("non-finite score " + std::string(to_string(sid)) + " for sample '" +
                  out.id + "'");
    }
    out.values(static_cast<Eigen::Index>(i)) = v;
  }
  return out;
}

ScoreVector DetectorBundle::score(const RawSample& sample) const {
  return score_reduced(reduce(sample), sample.id);
}

std::map<Modality, Eigen::MatrixXd> DetectorBundle::reduce_rows(
    const Dataset& data, const std::vector<std::string>& ids) const {
  std::map<Modality, Eigen::MatrixXd> out;
  for (const auto& [m, pipe] : pipelines_) {
    out[m] = pipe.preprocessor.reduce_rows(data.rows(m, ids));
  }
  return out;
}

Eigen::MatrixXd DetectorBundle::score_reduced_rows(
    const std::map<Modality, Eigen::MatrixXd>& reduced) const {
  Eigen::Index n = reduced.empty() ? 0 : reduced.begin()->second.rows();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(config_.layout.size()));
  for (std::size_t i = 0; i < config_.layout.size(); ++i) {
    const ScoreId sid = config_.layout[i];
    const Modality m = modality_of(sid);
    auto it = reduced.find(m);
    if (it == reduced.end()) {
      throw Error("no reduced " + std::string(to_string(m)) + " features for " +
                  std::string(to_string(sid)));
    }
    out.col(static_cast<Eigen::Index>(i)) =
        sid == ScoreId::kKnnVision ? knn_->score_rows(it->second, config_.knn_k)
                                   : pipeline(m).gmm->score_rows(it->second);
  }
  if (!out.allFinite()) throw Error("non-finite score in batch");
  return out;
}

Eigen::MatrixXd DetectorBundle::score_rows(const Dataset& data,
                                           const std::vector<std::string>& ids) const {
  return score_reduced_rows(reduce_rows(data, ids));
}

DetectorBundle fit_bundle(const Dataset& data, const DetectorConfig& config) {
  if (config.is_baseline()) {
    throw UsageError("config '" + config.name + "' has no detectors to fit");
  }
  const auto ids = data.ids(Split::kDetector, Label::kId);
  if (ids.empty()) throw Error("detector split has no ID samples");
  std::map<Modality, ModalityPipeline> pipelines;
  std::optional<NnIndex> knn;
  for (Modality m : config.pipeline_modalities()) {
    if (!data.has(m)) {
      throw Error("config '" + config.name + "' needs " + std::string(to_string(m)) +
                  " features");
    }
    const std::string stream(to_string(m));
    const Eigen::MatrixXd x = data.rows(m, ids);
    ModalityPipeline pipe;
    pipe.preprocessor = fit_preprocessor(
        x, PcaOptions{config.var_target, config.max_dims, derive_seed(config.seed, "pca:" + stream)});
    const Eigen::MatrixXd z = pipe.preprocessor.pca.project_rows(
        pipe.preprocessor.standardizer.transform_rows(x));
    const bool wants_gmm = std::any_of(config.layout.begin(), config.layout.end(),
                                       [&](ScoreId id) { return is_gmm(id) && modality_of(id) == m; });
    if (wants_gmm) {
      GmmOptions g;
      g.k = config.k;
      g.rho = config.rho;
      g.n_starts = config.n_starts;
      g.seed = derive_seed(config.seed, "gmm:" + stream);
      pipe.gmm = fit_gmm(z, g);
    }
    if (m == Modality::kVision &&
        std::find(config.layout.begin(), config.layout.end(), ScoreId::kKnnVision) !=
            config.layout.end()) {
      knn.emplace(z);
    }
    pipelines.emplace(m, std::move(pipe));
  }
  return DetectorBundle(config, std::move(pipelines), std::move(knn));
}

ScoreVector score_sample(const DetectorBundle& bundle, const RawSample& sample) {
  return bundle.score(sample);
}

RawSample raw_sample(const Dataset& data, const std::string& id) {
  RawSample s;
  s.id = id;
  for (Modality m : {Modality::kVision, Modality::kText, Modality::kFused}) {
    if (data.has(m)) s.vectors[m] = data.vector(m, id);
  }
  return s;
}

}  // namespace ata
