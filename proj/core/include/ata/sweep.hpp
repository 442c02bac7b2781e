#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ata/dataset.hpp"
#include "ata/metrics.hpp"
#include "ata/router.hpp"
#include "ata/scorebundle.hpp"

namespace ata {

/// Router decisions for `ids`. For a baseline router the bundle is unused
/// and may be null.
std::vector<Decision> route_ids(const DetectorBundle* bundle, const RouterModel& router,
                                const Dataset& data, const std::vector<std::string>& ids);

struct PipelineOptions {
  DetectorConfig config;  // baseline_raw trains the raw-feature baseline
  TrainHyper hyper;
  MixupSpec mixup;
  Split eval_split = Split::kValidation;
};

struct PipelineResult {
  ClassificationReport report;
  std::vector<std::string> ids;
  std::vector<Strategy> truth;
  std::vector<Strategy> predicted;
  TrainReport train;
};

/// fit bundle -> mixup -> train router -> evaluate on eval_split. The
/// bundle, mixup and router seeds are derived from `seed` (streams
/// "bundle", "mixup", "router"); the ones in `options` are ignored.
PipelineResult run_pipeline(const Dataset& data, const PipelineOptions& options,
                            std::uint64_t seed);

struct SweepCell {
  double axis_value = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> macro_f1;
  std::string error;
};

struct SweepPoint {
  double axis_value = 0.0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  /// Mean and sample standard deviation over completed cells; NaN when
  /// none completed, std 0 for a single cell.
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
};

struct SweepResult {
  std::string axis;  // "k" or "fraction"
  std::string config;
  std::vector<SweepPoint> points;
  std::vector<SweepCell> cells;  // axis-major, then seed order
};

/// One pipeline run per (K, seed); errors propagate.
SweepResult sweep_k(const Dataset& data, std::span<const int> k_values,
                    std::span<const std::uint64_t> seeds, const PipelineOptions& base);

inline const std::vector<double> kDefaultFractions = {0.001, 0.01, 0.05, 0.10, 0.25};

/// Subsamples the detector and mlp splits per (fraction, seed) and reruns
/// the pipeline for every config. Failing cells are recorded, not thrown.
std::vector<SweepResult> sweep_data(const Dataset& data, std::span<const double> fractions,
                                    std::span<const std::uint64_t> seeds,
                                    std::span<const PipelineOptions> configs);

nlohmann::ordered_json sweep_to_json(const SweepResult& result);
/// config,axis,value,mean_f1,std_f1,completed,failed
std::string sweep_csv(std::span<const SweepResult> results);

}  // namespace ata
