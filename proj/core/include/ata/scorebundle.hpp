#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "ata/dataset.hpp"
#include "ata/fusion.hpp"
#include "ata/gmm.hpp"
#include "ata/nnindex.hpp"
#include "ata/preprocess.hpp"

namespace ata {

enum class ScoreId { kGmmVision, kGmmText, kGmmFused, kKnnVision };

std::string_view to_string(ScoreId id);
ScoreId parse_score_id(std::string_view text);
/// Modality whose reduced features feed the score.
Modality modality_of(ScoreId id);

/// One cell of the ablation grid. The layout fixes the order of the score
/// vector; the full ensemble is [S_GMM_V, S_GMM_L, S_GMM_F, S_kNN_V].
struct DetectorConfig {
  std::string name;
  std::vector<ScoreId> layout;
  int k = 3;
  double rho = 0.01;
  int n_starts = 5;
  std::uint64_t seed = 0;
  double var_target = 0.95;
  int max_dims = 64;
  int knn_k = 1;

  /// baseline_raw has an empty layout: its router reads raw embeddings.
  bool is_baseline() const { return layout.empty(); }
  /// Modalities that need a standardizer + PCA pipeline.
  std::vector<Modality> pipeline_modalities() const;
  /// Raw modalities a sample must provide (fused is derived from both).
  std::vector<Modality> input_modalities() const;

  static DetectorConfig named(std::string_view name);
  static const std::vector<std::string>& known_names();
};

nlohmann::json config_to_json(const DetectorConfig& config);
DetectorConfig config_from_json(const nlohmann::json& j);

struct ModalityPipeline {
  Preprocessor preprocessor;
  std::optional<GmmModel> gmm;
};

/// Raw per-modality embeddings for one sample.
struct RawSample {
  std::string id;
  std::map<Modality, Eigen::VectorXd> vectors;
};

/// Reduced (standardized + projected) features per pipeline modality.
using ReducedSample = std::map<Modality, Eigen::VectorXd>;

struct ScoreVector {
  std::string id;
  Eigen::VectorXd values;
};

class DetectorBundle {
 public:
  DetectorBundle() = default;
  DetectorBundle(DetectorConfig config, std::map<Modality, ModalityPipeline> pipelines,
                 std::optional<NnIndex> knn);

  const DetectorConfig& config() const { return config_; }
  const std::map<Modality, ModalityPipeline>& pipelines() const { return pipelines_; }
  const ModalityPipeline& pipeline(Modality m) const;
  const std::optional<NnIndex>& knn() const { return knn_; }

  ReducedSample reduce(const RawSample& sample) const;
  ScoreVector score_reduced(const ReducedSample& reduced, std::string id = {}) const;
  ScoreVector score(const RawSample& sample) const;

  /// Batch path: reduced rows per modality for `ids` of `data`.
  std::map<Modality, Eigen::MatrixXd> reduce_rows(const Dataset& data,
                                                  const std::vector<std::string>& ids) const;
  /// Scores for stacked reduced rows; row i of the result is sample i.
  Eigen::MatrixXd score_reduced_rows(const std::map<Modality, Eigen::MatrixXd>& reduced) const;
  Eigen::MatrixXd score_rows(const Dataset& data, const std::vector<std::string>& ids) const;

 private:
  void check() const;

  DetectorConfig config_;
  std::map<Modality, ModalityPipeline> pipelines_;
  std::optional<NnIndex> knn_;
};

/// Fits every estimator the config needs on the detector-split samples
/// labelled ID.
DetectorBundle fit_bundle(const Dataset& data, const DetectorConfig& config);

ScoreVector score_sample(const DetectorBundle& bundle, const RawSample& sample);

/// Collects the raw vision/text vectors of `id` (and fused, when present).
RawSample raw_sample(const Dataset& data, const std::string& id);

}  // namespace ata
