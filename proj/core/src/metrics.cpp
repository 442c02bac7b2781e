#include "ata/metrics.hpp"

#include <sstream>

#include "ata/error.hpp"

namespace ata {

ClassificationReport classification_report(std::span<const Strategy> truth,
                                           std::span<const Strategy> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error("classification_report: truth has " + std::to_string(truth.size()) +
                " entries, predictions " + std::to_string(predicted.size()));
  }
  if (truth.empty()) throw Error("classification_report: no samples");
  ClassificationReport r;
  r.total = truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  std::size_t present = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::size_t tp = r.confusion[c][c];
    std::size_t support = 0;
    std::size_t predicted_count = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      support += r.confusion[c][j];
      predicted_count += r.confusion[j][c];
    }
    auto& m = r.per_class[c];
    m.support = support;
    m.precision = predicted_count ? static_cast<double>(tp) / static_cast<double>(predicted_count) : 0.0;
    m.recall = support ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                        : 0.0;
    if (support == 0) continue;
    ++present;
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
  }
  r.macro_precision /= static_cast<double>(present);
  r.macro_recall /= static_cast<double>(present);
  r.macro_f1 /= static_cast<double>(present);
  return r;
}

nlohmann::ordered_json report_to_json(const ClassificationReport& r) {
  nlohmann::ordered_json j;
  j["classes"] = {"Act", "Think", "Abstain"};
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  j["total"] = r.total;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& m = r.per_class[c];
    per_class.push_back({{"class", std::string(to_string(static_cast<Strategy>(c)))},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"support", m.support}});
  }
  j["per_class"] = per_class;
  j["confusion"] = r.confusion;
  nlohmann::ordered_json normalized = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < 3; ++t) {
    const double support = static_cast<double>(r.per_class[t].support);
    std::array<double, 3> row{};
    for (std::size_t p = 0; p < 3; ++p) {
      row[p] = support > 0 ? static_cast<double>(r.confusion[t][p]) / support : 0.0;
    }
    normalized.push_back(row);
  }
  j["confusion_row_normalized"] = normalized;
  return j;
}

std::string confusion_csv(const ClassificationReport& r) {
  std::ostringstream out;
  out << "truth,predicted,count,row_fraction\n";
  for (std::size_t t = 0; t < 3; ++t) {
    const double support = static_cast<double>(r.per_class[t].support);
    for (std::size_t p = 0; p < 3; ++p) {
      out << to_string(static_cast<Strategy>(t)) << ',' << to_string(static_cast<Strategy>(p))
          << ',' << r.confusion[t][p] << ','
          << (support > 0 ? static_cast<double>(r.confusion[t][p]) / support : 0.0) << '\n';
    }
  }
  return out.str();
}

}  // namespace ata
