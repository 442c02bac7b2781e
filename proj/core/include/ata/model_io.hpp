#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "ata/gmm.hpp"
#include "ata/nnindex.hpp"
#include "ata/preprocess.hpp"
#include "ata/router.hpp"
#include "ata/scorebundle.hpp"

namespace ata {

// Every model is a directory of float64 ATAF tensors plus a meta.json
// sidecar. Reloaded models reproduce the fitted scores bit for bit.

void save_preprocessor(const Preprocessor& pre, const std::filesystem::path& dir);
Preprocessor load_preprocessor(const std::filesystem::path& dir);

void save_gmm(const GmmModel& model, const std::filesystem::path& dir);
GmmModel load_gmm(const std::filesystem::path& dir);

void save_index(const NnIndex& index, const std::filesystem::path& dir);
NnIndex load_index(const std::filesystem::path& dir);

/// bundle/{config.json, vision/, text/, fused/, knn/}
void save_bundle(const DetectorBundle& bundle, const std::filesystem::path& dir);
DetectorBundle load_bundle(const std::filesystem::path& dir);

void save_router(const RouterModel& model, const std::filesystem::path& dir);
RouterModel load_router(const std::filesystem::path& dir);

nlohmann::ordered_json gmm_meta_to_json(const GmmFitMeta& meta);
nlohmann::ordered_json train_report_to_json(const TrainReport& report);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::ordered_json& j, const std::filesystem::path& path);

}  // namespace ata
