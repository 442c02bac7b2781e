#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "ata/ataf.hpp"

namespace ata {

enum class Modality { kVision, kText, kFused };
enum class Label { kId, kPartialOod, kFullOod };
enum class Split { kDetector, kMlp, kValidation, kTest };

inline constexpr std::size_t kVisionDim = 768;
inline constexpr std::size_t kTextDim = 960;
inline constexpr std::size_t kFusedDim = kVisionDim + kTextDim;

std::string_view to_string(Modality m);
std::string_view to_string(Label l);
std::string_view to_string(Split s);
Modality parse_modality(std::string_view text);
Label parse_label(std::string_view text);
Split parse_split(std::string_view text);

/// Dimensionality the extractor produces for a modality.
std::size_t canonical_dim(Modality m);

/// N x D embeddings for one modality. Row i belongs to ids[i].
struct FeatureMatrix {
  Modality modality = Modality::kVision;
  RowMatrixF data;
  std::vector<std::string> ids;

  std::size_t rows() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(data.cols()); }
  /// True when D differs from the extractor's dimension for this modality.
  bool nonstandard_dim() const { return dim() != canonical_dim(modality); }
};

/// Checks the FeatureMatrix invariants: N > 0, D > 0, all values finite.
/// The error names the first offending row.
void validate_features(const FeatureMatrix& matrix);

void write_features(const FeatureMatrix& matrix,
                    const std::filesystem::path& path);
/// Reads an ATAF float32 rank-2 file. ids are left empty; the manifest
/// supplies them.
FeatureMatrix read_features(const std::filesystem::path& path,
                            Modality modality);

struct ManifestRecord {
  std::string id;
  Modality modality = Modality::kVision;
  Label label = Label::kId;
  std::optional<Split> split;  // nullopt = not yet assigned
  std::string episode_id;
  std::string suite;
  std::string variant;
  nlohmann::json extra = nlohmann::json::object();  // unknown keys, preserved
};

struct Manifest {
  std::vector<ManifestRecord> records;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
ManifestRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const ManifestRecord& r);

/// Sample-level view: one entry per distinct id, in first-appearance order.
struct SampleInfo {
  std::string id;
  Label label;
  std::optional<Split> split;
  std::string suite;
  std::string variant;
};
/// Throws when records sharing an id disagree on label or split.
std::vector<SampleInfo> samples_of(const Manifest& manifest);

enum class Stratify { kLabel, kLabelSuiteVariant };

struct PartitionOptions {
  std::uint64_t seed = 0;
  Stratify stratify = Stratify::kLabel;
};

/// Stratified 50/25/25 split into detector/mlp/validation. Per stratum of n
/// samples: floor(n/2) detector, floor(n/4) mlp, the rest validation.
/// Records already assigned to the test split are left untouched.
Manifest partition(const Manifest& manifest, const PartitionOptions& options);

struct SubsampleSpec {
  double fraction = 1.0;
  std::uint64_t seed = 0;
};

/// Keeps max(1, round(fraction * n)) samples per (split, label) stratum of
/// the detector and mlp splits; validation and test are untouched.
Manifest subsample(const Manifest& manifest, const SubsampleSpec& spec);

/// Manifest plus the feature matrices it describes. Fused features are
/// derived from vision and text on load unless supplied explicitly.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Manifest manifest, std::map<Modality, FeatureMatrix> features);

  const Manifest& manifest() const { return manifest_; }
  const std::vector<SampleInfo>& samples() const { return samples_; }
  bool has(Modality m) const { return features_.count(m) != 0; }
  const FeatureMatrix& features(Modality m) const;
  /// Row of `id` in the modality's matrix, as double.
  Eigen::VectorXd vector(Modality m, const std::string& id) const;
  /// Rows for `ids`, stacked in the given order.
  Eigen::MatrixXd rows(Modality m, const std::vector<std::string>& ids) const;

  /// Same features, different manifest (e.g. after partition/subsample).
  Dataset with_manifest(Manifest manifest) const;

  /// ids of samples matching split (and optionally label), manifest order.
  std::vector<std::string> ids(Split split,
                               std::optional<Label> label = std::nullopt) const;

 private:
  void index();

  Manifest manifest_;
  std::vector<SampleInfo> samples_;
  std::map<Modality, FeatureMatrix> features_;
  std::map<Modality, std::unordered_map<std::string, std::size_t>> row_of_;
};

/// Builds the fused matrix row by row from vision and text.
FeatureMatrix fuse_matrices(const FeatureMatrix& vision, const FeatureMatrix& text);

/// Directory layout: manifest.jsonl, vision.ataf, text.ataf (rows in the
/// order of that modality's manifest records), optional fused.ataf.
Dataset load_dataset(const std::filesystem::path& dir);
/// Writes manifest and the vision/text matrices. Derived fused features are
/// not written.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace ata
