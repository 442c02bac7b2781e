#include "ata/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ata/error.hpp"
#include "ata/fusion.hpp"
#include "ata/log.hpp"
#include "ata/rng.hpp"

namespace ata {

namespace fs = std::filesystem;

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kVision: return "vision";
    case Modality::kText: return "text";
    case Modality::kFused: return "fused";
  }
  return "?";
}

std::string_view to_string(Label l) {
  switch (l) {
    case Label::kId: return "ID";
    case Label::kPartialOod: return "PartialOOD";
    case Label::kFullOod: return "FullOOD";
  }
  return "?";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kDetector: return "detector";
    case Split::kMlp: return "mlp";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

Modality parse_modality(std::string_view text) {
  if (text == "vision") return Modality::kVision;
  if (text == "text") return Modality::kText;
  if (text == "fused") return Modality::kFused;
  throw Error("unknown modality '" + std::string(text) + "'");
}

Label parse_label(std::string_view text) {
  if (text == "ID") return Label::kId;
  if (text == "PartialOOD") return Label::kPartialOod;
  if (text == "FullOOD") return Label::kFullOod;
  throw Error("unknown label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "detector") return Split::kDetector;
  if (text == "mlp") return Split::kMlp;
  if (text == "validation") return Split::kValidation;
  if (text == "test") return Split::kTest;
  throw Error("unknown split '" + std::string(text) + "'");
}

std::size_t canonical_dim(Modality m) {
  switch (m) {
    case Modality::kVision: return kVisionDim;
    case Modality::kText: return kTextDim;
    case Modality::kFused: return kFusedDim;
  }
  return 0;
}

void validate_features(const FeatureMatrix& matrix) {
  if (matrix.data.rows() == 0) throw Error("empty matrix");
  if (matrix.data.cols() == 0) throw Error("matrix has zero columns");
  for (Eigen::Index r = 0; r < matrix.data.rows(); ++r) {
    if (!matrix.data.row(r).allFinite()) {
      throw Error("non-finite value in row " + std::to_string(r));
    }
  }
  if (!matrix.ids.empty() && matrix.ids.size() != matrix.rows()) {
    throw Error("feature matrix has " + std::to_string(matrix.rows()) +
                " rows but " + std::to_string(matrix.ids.size()) + " ids");
  }
}

void write_features(const FeatureMatrix& matrix, const fs::path& path) {
  validate_features(matrix);
  std::vector<float> values(matrix.data.data(),
                            matrix.data.data() + matrix.data.size());
  write_tensor(path, Tensor({static_cast<std::uint64_t>(matrix.data.rows()),
                             static_cast<std::uint64_t>(matrix.data.cols())},
                            std::move(values)));
}

FeatureMatrix read_features(const fs::path& path, Modality modality) {
  const Tensor t = read_tensor(path);
  if (t.rank() != 2) throw Error(path.string() + ": feature file must be rank 2");
  if (t.dtype() != DType::kFloat32) {
    throw Error(path.string() + ": feature file must be float32");
  }
  FeatureMatrix m;
  m.modality = modality;
  const auto f = t.f32();
  m.data = Eigen::Map<const RowMatrixF>(f.data(),
                                        static_cast<Eigen::Index>(t.shape()[0]),
                                        static_cast<Eigen::Index>(t.shape()[1]));
  if (m.nonstandard_dim()) {
    log::info(path.string() + ": " + std::string(to_string(modality)) +
              " features declare D = " + std::to_string(m.dim()));
  }
  return m;
}

// ---------------------------------------------------------------- manifest

namespace {
const std::set<std::string> kKnownKeys = {"id",         "modality", "label",
                                          "split",      "episode_id", "suite",
                                          "variant"};

std::string string_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  if (j[key].is_string()) return j[key].get<std::string>();
  return j[key].dump();
}
}  // namespace

ManifestRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("manifest record is not a JSON object");
  if (!j.contains("id")) throw Error("manifest record without id");
  ManifestRecord r;
  r.id = string_field(j, "id");
  if (!j.contains("modality") || !j["modality"].is_string()) {
    throw Error("manifest record '" + r.id + "' has no modality");
  }
  r.modality = parse_modality(j["modality"].get<std::string>());
  if (!j.contains("label") || !j["label"].is_string()) {
    throw Error("manifest record '" + r.id + "' has no label");
  }
  r.label = parse_label(j["label"].get<std::string>());
  if (j.contains("split") && !j["split"].is_null()) {
    r.split = parse_split(j["split"].get<std::string>());
  }
  r.episode_id = string_field(j, "episode_id");
  r.suite = string_field(j, "suite");
  r.variant = string_field(j, "variant");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKnownKeys.count(it.key())) r.extra[it.key()] = it.value();
  }
  return r;
}

nlohmann::json record_to_json(const ManifestRecord& r) {
  nlohmann::ordered_json o;
  o["id"] = r.id;
  o["modality"] = std::string(to_string(r.modality));
  o["label"] = std::string(to_string(r.label));
  o["split"] = r.split ? nlohmann::ordered_json(std::string(to_string(*r.split)))
                       : nlohmann::ordered_json(nullptr);
  o["episode_id"] = r.episode_id;
  o["suite"] = r.suite;
  o["variant"] = r.variant;
  nlohmann::json j = o;
  for (auto it = r.extra.begin(); it != r.extra.end(); ++it) {
    j[it.key()] = it.value();
  }
  return j;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& r : manifest.records) out << record_to_json(r).dump() << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<SampleInfo> samples_of(const Manifest& manifest) {
  std::vector<SampleInfo> samples;
  std::unordered_map<std::string, std::size_t> seen;
  std::set<std::pair<std::string, Modality>> per_modality;
  for (const auto& r : manifest.records) {
    if (!per_modality.insert({r.id, r.modality}).second) {
      throw Error("id '" + r.id + "' has more than one " +
                  std::string(to_string(r.modality)) + " record");
    }
    auto [it, inserted] = seen.try_emplace(r.id, samples.size());
    if (inserted) {
      samples.push_back({r.id, r.label, r.split, r.suite, r.variant});
      continue;
    }
    const auto& s = samples[it->second];
    if (s.label != r.label || s.split != r.split) {
      throw Error("records for id '" + r.id + "' disagree on label or split");
    }
  }
  return samples;
}

namespace {

std::string stratum_key(const SampleInfo& s, Stratify stratify) {
  std::string key(to_string(s.label));
  if (stratify == Stratify::kLabelSuiteVariant) {
    key += "|" + s.suite + "|" + s.variant;
  }
  return key;
}

Manifest apply_splits(const Manifest& manifest,
                      const std::unordered_map<std::string, std::optional<Split>>&
                          assignment,
                      bool drop_missing) {
  Manifest out;
  out.records.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    auto it = assignment.find(r.id);
    if (it == assignment.end()) {
      if (!drop_missing) out.records.push_back(r);
      continue;
    }
    ManifestRecord copy = r;
    copy.split = it->second;
    out.records.push_back(std::move(copy));
  }
  return out;
}

}  // namespace

Manifest partition(const Manifest& manifest, const PartitionOptions& options) {
  const auto samples = samples_of(manifest);
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::string>> strata;
  for (const auto& s : samples) {
    if (s.split == Split::kTest) continue;
    const auto key = stratum_key(s, options.stratify);
    if (!strata.count(key)) order.push_back(key);
    strata[key].push_back(s.id);
  }
  std::unordered_map<std::string, std::optional<Split>> assignment;
  for (const auto& key : order) {
    auto ids = strata[key];
    const std::size_t n = ids.size();
    if (n < 4) {
      throw Error("stratum '" + key + "' has " + std::to_string(n) +
                  " samples; at least 4 are needed for a 50/25/25 partition");
    }
    Rng rng(derive_seed(options.seed, "partition:" + key));
    rng.shuffle(std::span<std::string>(ids));
    const std::size_t n_detector = n / 2;
    const std::size_t n_mlp = n / 4;
    for (std::size_t i = 0; i < n; ++i) {
      Split s = i < n_detector           ? Split::kDetector
                : i < n_detector + n_mlp ? Split::kMlp
                                         : Split::kValidation;
      assignment[ids[i]] = s;
    }
  }
  return apply_splits(manifest, assignment, false);
}

Manifest subsample(const Manifest& manifest, const SubsampleSpec& spec) {
  if (!(spec.fraction > 0.0) || spec.fraction > 1.0) {
    std::ostringstream msg;
    msg << "subsample fraction must be in (0, 1], got " << spec.fraction;
    throw Error(msg.str());
  }
  const auto samples = samples_of(manifest);
  if (spec.fraction == 1.0) return manifest;

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::string>> strata;
  for (const auto& s : samples) {
    if (s.split != Split::kDetector && s.split != Split::kMlp) continue;
    std::string key = std::string(to_string(*s.split)) + ":" +
                      std::string(to_string(s.label));
    if (!strata.count(key)) order.push_back(key);
    strata[key].push_back(s.id);
  }
  std::set<std::string> chosen;
  for (const auto& key : order) {
    auto ids = strata[key];
    const std::size_t n = ids.size();
    const auto wanted = static_cast<std::size_t>(
        std::max(1.0, std::round(spec.fraction * static_cast<double>(n))));
    Rng rng(derive_seed(spec.seed, "subsample:" + key));
    rng.shuffle(std::span<std::string>(ids));
    chosen.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(wanted, n)));
  }
  std::unordered_map<std::string, std::optional<Split>> keep;
  for (const auto& s : samples) {
    const bool subsampled = s.split == Split::kDetector || s.split == Split::kMlp;
    if (!subsampled || chosen.count(s.id)) keep[s.id] = s.split;
  }
  return apply_splits(manifest, keep, true);
}

// ----------------------------------------------------------------- dataset

Dataset::Dataset(Manifest manifest, std::map<Modality, FeatureMatrix> features)
    : manifest_(std::move(manifest)), features_(std::move(features)) {
  index();
}

void Dataset::index() {
  samples_ = samples_of(manifest_);
  row_of_.clear();
  for (auto& [modality, matrix] : features_) {
    auto& rows = row_of_[modality];
    rows.reserve(matrix.ids.size());
    for (std::size_t i = 0; i < matrix.ids.size(); ++i) {
      if (!rows.emplace(matrix.ids[i], i).second) {
        throw Error("duplicate id '" + matrix.ids[i] + "' in " +
                    std::string(to_string(modality)) + " features");
      }
    }
  }
}

const FeatureMatrix& Dataset::features(Modality m) const {
  auto it = features_.find(m);
  if (it == features_.end()) {
    throw Error("dataset has no " + std::string(to_string(m)) + " features");
  }
  return it->second;
}

Eigen::VectorXd Dataset::vector(Modality m, const std::string& id) const {
  const auto& matrix = features(m);
  const auto& rows = row_of_.at(m);
  auto it = rows.find(id);
  if (it == rows.end()) {
    throw Error("id '" + id + "' has no " + std::string(to_string(m)) + " features");
  }
  return matrix.data.row(static_cast<Eigen::Index>(it->second))
      .transpose()
      .cast<double>();
}

Eigen::MatrixXd Dataset::rows(Modality m, const std::vector<std::string>& ids) const {
  const auto& matrix = features(m);
  const auto& rows = row_of_.at(m);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), matrix.data.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = rows.find(ids[i]);
    if (it == rows.end()) {
      throw Error("id '" + ids[i] + "' has no " + std::string(to_string(m)) +
                  " features");
    }
    out.row(static_cast<Eigen::Index>(i)) =
        matrix.data.row(static_cast<Eigen::Index>(it->second)).cast<double>();
  }
  return out;
}

Dataset Dataset::with_manifest(Manifest manifest) const {
  Dataset copy;
  copy.manifest_ = std::move(manifest);
  copy.features_ = features_;
  copy.samples_ = samples_of(copy.manifest_);
  copy.row_of_ = row_of_;
  return copy;
}

std::vector<std::string> Dataset::ids(Split split, std::optional<Label> label) const {
  std::vector<std::string> out;
  for (const auto& s : samples_) {
    if (s.split != split) continue;
    if (label && s.label != *label) continue;
    out.push_back(s.id);
  }
  return out;
}

FeatureMatrix fuse_matrices(const FeatureMatrix& vision, const FeatureMatrix& text) {
  std::unordered_map<std::string, std::size_t> text_row;
  for (std::size_t i = 0; i < text.ids.size(); ++i) text_row.emplace(text.ids[i], i);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  FeatureMatrix fused;
  fused.modality = Modality::kFused;
  for (std::size_t i = 0; i < vision.ids.size(); ++i) {
    auto it = text_row.find(vision.ids[i]);
    if (it == text_row.end()) continue;
    pairs.emplace_back(i, it->second);
    fused.ids.push_back(vision.ids[i]);
  }
  fused.data.resize(static_cast<Eigen::Index>(pairs.size()),
                    vision.data.cols() + text.data.cols());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Eigen::VectorXd v =
        vision.data.row(static_cast<Eigen::Index>(pairs[k].first)).transpose().cast<double>();
    const Eigen::VectorXd t =
        text.data.row(static_cast<Eigen::Index>(pairs[k].second)).transpose().cast<double>();
    Eigen::VectorXd f;
    try {
      f = fuse_features(v, t);
    } catch (const Error& e) {
      throw Error("sample '" + fused.ids[k] + "': " + e.what());
    }
    fused.data.row(static_cast<Eigen::Index>(k)) = f.transpose().cast<float>();
  }
  return fused;
}

Dataset load_dataset(const fs::path& dir) {
  Manifest manifest = read_manifest(dir / "manifest.jsonl");
  std::map<Modality, FeatureMatrix> features;
  for (Modality m : {Modality::kVision, Modality::kText, Modality::kFused}) {
    const fs::path file = dir / (std::string(to_string(m)) + ".ataf");
    std::vector<std::string> ids;
    for (const auto& r : manifest.records) {
      if (r.modality == m) ids.push_back(r.id);
    }
    if (!fs::exists(file)) {
      if (!ids.empty() && m != Modality::kFused) {
        throw Error("manifest lists " + std::string(to_string(m)) +
                    " records but " + file.string() + " is missing");
      }
      continue;
    }
    FeatureMatrix matrix = read_features(file, m);
    if (matrix.rows() != ids.size()) {
      throw Error(file.string() + " has " + std::to_string(matrix.rows()) +
                  " rows but the manifest lists " + std::to_string(ids.size()) +
                  " " + std::string(to_string(m)) + " records");
    }
    matrix.ids = std::move(ids);
    try {
      validate_features(matrix);
    } catch (const Error& e) {
      throw Error(file.string() + ": " + e.what());
    }
    features.emplace(m, std::move(matrix));
  }
  if (!features.count(Modality::kFused) && features.count(Modality::kVision) &&
      features.count(Modality::kText)) {
    features.emplace(Modality::kFused, fuse_matrices(features.at(Modality::kVision),
                                                     features.at(Modality::kText)));
  }
  return Dataset(std::move(manifest), std::move(features));
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  Manifest manifest;
  for (const auto& r : dataset.manifest().records) {
    if (r.modality != Modality::kFused) manifest.records.push_back(r);
  }
  // Feature rows must follow the order of the manifest records.
  for (Modality m : {Modality::kVision, Modality::kText}) {
    if (!dataset.has(m)) continue;
    std::vector<std::string> ids;
    for (const auto& r : manifest.records) {
      if (r.modality == m) ids.push_back(r.id);
    }
    FeatureMatrix out;
    out.modality = m;
    out.ids = ids;
    out.data = dataset.rows(m, ids).cast<float>();
    write_features(out, dir / (std::string(to_string(m)) + ".ataf"));
  }
  write_manifest(manifest, dir / "manifest.jsonl");
}

}  // namespace ata
