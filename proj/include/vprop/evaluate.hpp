#pragma once

// Evaluation campaigns: greedy rollouts on fresh seeded maps, per map size.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vprop/envworld.hpp"
#include "vprop/planners.hpp"

namespace vprop {

struct SizeReport {
  int size = 0;
  int episodes = 0;
  int wins = 0;
  double win_rate = 0.0;
  /// Steps beyond the oracle hop count, successful episodes only.
  double mean_distance_to_optimal = 0.0;
  /// Mean episode reward per seed, then min/mean/max across seeds.
  double reward_min = 0.0;
  double reward_mean = 0.0;
  double reward_max = 0.0;
  std::vector<double> seed_win_rates;
};

struct EvalReport {
  std::string variant;
  std::string env;
  std::vector<SizeReport> sizes;
};

struct EvalOptions {
  EnvKind env = EnvKind::Static;
  std::vector<int> sizes{8};
  int episodes_per_size = 100;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct EpisodeTrace {
  std::vector<int> actions;
  std::vector<double> rewards;
  Outcome outcome = Outcome::Ongoing;
  int optimal_hops = 0;
  int steps() const { return static_cast<int>(actions.size()); }
  friend bool operator==(const EpisodeTrace&, const EpisodeTrace&) = default;
};

/// Chooses an action for the current world state.
using Policy = std::function<int(const GridWorld&, Rng&)>;

/// Seed of episode `episode` on `size` maps under evaluation seed `seed`.
std::uint64_t episode_seed(std::uint64_t seed, int size, int episode);

/// Runs `policy` until the world terminates.
EpisodeTrace run_episode(GridWorld world, const Policy& policy, Rng& rng);

EvalReport evaluate_policy(const Policy& policy, const EvalOptions& options, std::string label = "policy");

/// Greedy planner policy; K is recomputed per map size.
EvalReport evaluate(const PlannerConfig& config, const PlannerParams<float>& params, const EvalOptions& options);

/// Greedy planner policy as a Policy callable.
Policy greedy_policy(const PlannerConfig& config, const PlannerParams<float>& params);

/// Follows a shortest path from the oracle.
Policy oracle_policy();

/// Uniformly random actions.
Policy random_policy();

std::string report_to_json(const EvalReport& report);

}  // namespace vprop
