#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "ata/router.hpp"

namespace ata {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

/// Confusion rows are the true class, columns the prediction, both in the
/// Act/Think/Abstain order. Classes with zero support are left out of the
/// macro averages.
struct ClassificationReport {
  std::array<std::array<std::size_t, 3>, 3> confusion{};
  std::array<ClassMetrics, 3> per_class{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::size_t total = 0;
};

ClassificationReport classification_report(std::span<const Strategy> truth,
                                           std::span<const Strategy> predicted);

nlohmann::ordered_json report_to_json(const ClassificationReport& report);
/// Long-form confusion table: truth,predicted,count,row_fraction.
std::string confusion_csv(const ClassificationReport& report);

}  // namespace ata
