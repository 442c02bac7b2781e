#include "ata/rollout.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ata/error.hpp"

namespace ata {

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kSuccess: return "success";
    case Outcome::kFailure: return "failure";
    case Outcome::kNotExecuted: return "not_executed";
  }
  return "?";
}

Outcome parse_outcome(std::string_view text) {
  if (text == "success") return Outcome::kSuccess;
  if (text == "failure") return Outcome::kFailure;
  if (text == "not_executed") return Outcome::kNotExecuted;
  throw Error("unknown outcome '" + std::string(text) + "'");
}

void validate_episode(const EpisodeRecord& r) {
  if (!std::isfinite(r.wall_time_s) || r.wall_time_s < 0.0) {
    throw Error("episode '" + r.episode_id + "': wall_time_s must be finite and >= 0");
  }
  if (r.decision == Strategy::kAbstain) {
    if (r.outcome != Outcome::kNotExecuted) {
      throw Error("episode '" + r.episode_id + "': Abstain requires outcome not_executed");
    }
    if (!r.counterfactual_failure) {
      throw Error("episode '" + r.episode_id + "': Abstain row without counterfactual_failure");
    }
  }
}

EpisodeRecord episode_from_json(const nlohmann::json& j) {
  EpisodeRecord r;
  try {
    r.episode_id = j.at("episode_id").is_string() ? j.at("episode_id").get<std::string>()
                                                  : j.at("episode_id").dump();
    r.suite = j.value("suite", "");
    r.variant = j.value("variant", "");
    r.decision = parse_strategy(j.at("decision").get<std::string>());
    r.outcome = parse_outcome(j.at("outcome").get<std::string>());
    r.wall_time_s = j.at("wall_time_s").get<double>();
    if (j.contains("counterfactual_failure") && !j["counterfactual_failure"].is_null()) {
      r.counterfactual_failure = j["counterfactual_failure"].get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("episode record: ") + e.what());
  }
  validate_episode(r);
  return r;
}

nlohmann::ordered_json episode_to_json(const EpisodeRecord& r) {
  nlohmann::ordered_json j;
  j["episode_id"] = r.episode_id;
  j["suite"] = r.suite;
  j["variant"] = r.variant;
  j["decision"] = std::string(to_string(r.decision));
  j["outcome"] = std::string(to_string(r.outcome));
  j["wall_time_s"] = r.wall_time_s;
  if (r.counterfactual_failure) j["counterfactual_failure"] = *r.counterfactual_failure;
  return j;
}

std::vector<EpisodeRecord> read_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open episode log " + path.string());
  std::vector<EpisodeRecord> log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      log.push_back(episode_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

void write_episode_log(std::span<const EpisodeRecord> log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& r : log) out << episode_to_json(r).dump() << '\n';
}

double RolloutTally::success_rate() const {
  return episodes ? static_cast<double>(successes) / static_cast<double>(episodes) : 0.0;
}

double RolloutTally::mean_wall_time() const {
  return episodes ? wall_time_sum / static_cast<double>(episodes) : 0.0;
}

RolloutAccount rollout_account(std::span<const EpisodeRecord> log) {
  if (log.empty()) throw Error("rollout_account: empty episode log");
  RolloutAccount account;
  for (const auto& r : log) {
    validate_episode(r);
    auto& t = account[{r.suite, r.variant}];
    ++t.episodes;
    if (r.outcome == Outcome::kSuccess) ++t.successes;
    if (r.decision == Strategy::kAbstain && r.counterfactual_failure.value_or(false)) {
      ++t.prevented_failures;
    }
    ++t.decisions[static_cast<std::size_t>(r.decision)];
    t.wall_time_sum += r.wall_time_s;
  }
  return account;
}

RolloutAccount merge_accounts(const RolloutAccount& a, const RolloutAccount& b) {
  RolloutAccount out = a;
  for (const auto& [key, t] : b) {
    auto& m = out[key];
    m.episodes += t.episodes;
    m.successes += t.successes;
    m.prevented_failures += t.prevented_failures;
    for (std::size_t i = 0; i < 3; ++i) m.decisions[i] += t.decisions[i];
    m.wall_time_sum += t.wall_time_sum;
  }
  return out;
}

nlohmann::ordered_json account_to_json(const RolloutAccount& account) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& [key, t] : account) {
    nlohmann::ordered_json j;
    j["suite"] = key.first;
    j["variant"] = key.second;
    j["episodes"] = t.episodes;
    j["success_rate"] = t.success_rate();
    j["prevented_failures"] = t.prevented_failures;
    j["act"] = t.decisions[0];
    j["think"] = t.decisions[1];
    j["abstain"] = t.decisions[2];
    j["mean_wall_time_s"] = t.mean_wall_time();
    rows.push_back(j);
  }
  return rows;
}

std::string account_csv(const RolloutAccount& account) {
  std::ostringstream out;
  out << "Suite,Variant,Episodes,SR (%),PF,A / T / Ab,T_inf (s)\n";
  out << std::fixed;
  for (const auto& [key, t] : account) {
    out << key.first << ',' << key.second << ',' << t.episodes << ',' << std::setprecision(2)
        << 100.0 * t.success_rate() << ',' << t.prevented_failures << ',' << t.decisions[0]
        << " / " << t.decisions[1] << " / " << t.decisions[2] << ',' << t.mean_wall_time()
        << '\n';
  }
  return out.str();
}

}  // namespace ata
