#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ata/router.hpp"

namespace ata {

enum class Outcome { kSuccess, kFailure, kNotExecuted };

std::string_view to_string(Outcome o);
Outcome parse_outcome(std::string_view text);

/// One replayed episode. Abstain rows carry counterfactual_failure: whether
/// the episode would have failed had it been executed.
struct EpisodeRecord {
  std::string episode_id;
  std::string suite;
  std::string variant;
  Strategy decision = Strategy::kAct;
  Outcome outcome = Outcome::kSuccess;
  double wall_time_s = 0.0;
  std::optional<bool> counterfactual_failure;
};

/// Throws when decision = Abstain without outcome not_executed or without a
/// counterfactual flag, or when wall_time_s is negative or non-finite.
void validate_episode(const EpisodeRecord& record);

EpisodeRecord episode_from_json(const nlohmann::json& j);
nlohmann::ordered_json episode_to_json(const EpisodeRecord& record);
std::vector<EpisodeRecord> read_episode_log(const std::filesystem::path& path);
void write_episode_log(std::span<const EpisodeRecord> log, const std::filesystem::path& path);

/// Raw counts for one (suite, variant); means are derived so that tallies
/// from disjoint logs merge exactly.
struct RolloutTally {
  std::size_t episodes = 0;
  std::size_t successes = 0;
  std::size_t prevented_failures = 0;
  std::array<std::size_t, 3> decisions{};  // Act, Think, Abstain
  double wall_time_sum = 0.0;

  double success_rate() const;
  double mean_wall_time() const;
};

using RolloutKey = std::pair<std::string, std::string>;  // suite, variant
using RolloutAccount = std::map<RolloutKey, RolloutTally>;

RolloutAccount rollout_account(std::span<const EpisodeRecord> log);
RolloutAccount merge_accounts(const RolloutAccount& a, const RolloutAccount& b);

nlohmann::ordered_json account_to_json(const RolloutAccount& account);
/// Suite,Variant,SR (%),PF,A / T / Ab,T_inf (s)
std::string account_csv(const RolloutAccount& account);

}  // namespace ata
