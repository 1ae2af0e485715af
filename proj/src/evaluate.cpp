#include "vprop/evaluate.hpp"

#include <algorithm>
#include <memory>

#include <json.hpp>

#include "vprop/oracle.hpp"
#include "vprop/trainer.hpp"

namespace vprop {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t episode_seed(std::uint64_t seed, int size, int episode) {
  return splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(size)) ^
                    static_cast<std::uint64_t>(episode));
}

EpisodeTrace run_episode(GridWorld world, const Policy& policy, Rng& rng) {
  EpisodeTrace trace;
  trace.optimal_hops = optimal_steps(world);
  while (!world.terminal()) {
    const int action = policy(world, rng);
    const auto result = step(world, action, rng);
    trace.actions.push_back(action);
    trace.rewards.push_back(result.reward);
  }
  trace.outcome = world.outcome;
  return trace;
}

EvalReport evaluate_policy(const Policy& policy, const EvalOptions& options, std::string label) {
  EvalReport report;
  report.variant = std::move(label);
  report.env = std::string(to_string(options.env));
  for (const int size : options.sizes) {
    SizeReport sr;
    sr.size = size;
    double distance_sum = 0;
    std::vector<double> seed_rewards;
    for (const auto seed : options.seeds) {
      double reward_sum = 0;
      int seed_wins = 0;
      for (int e = 0; e < options.episodes_per_size; ++e) {
        const auto s = episode_seed(seed, size, e);
        const GridWorld world = generate(options.env, size, size, s);
        Rng rng(s ^ 0xA5A5A5A5A5A5A5A5ULL);
        const auto trace = run_episode(world, policy, rng);
        ++sr.episodes;
        for (double r : trace.rewards) reward_sum += r;
        if (trace.outcome == Outcome::Win) {
          ++sr.wins;
          ++seed_wins;
          distance_sum += trace.steps() - trace.optimal_hops;
        }
      }
      const double n = std::max(options.episodes_per_size, 1);
      seed_rewards.push_back(reward_sum / n);
      sr.seed_win_rates.push_back(seed_wins / n);
    }
    sr.win_rate = sr.episodes ? static_cast<double>(sr.wins) / sr.episodes : 0.0;
    sr.mean_distance_to_optimal = sr.wins ? distance_sum / sr.wins : 0.0;
    if (!seed_rewards.empty()) {
      sr.reward_min = *std::min_element(seed_rewards.begin(), seed_rewards.end());
      sr.reward_max = *std::max_element(seed_rewards.begin(), seed_rewards.end());
      double total = 0;
      for (double r : seed_rewards) total += r;
      sr.reward_mean = total / static_cast<double>(seed_rewards.size());
    }
    report.sizes.push_back(sr);
  }
  return report;
}

Policy greedy_policy(const PlannerConfig& config, const PlannerParams<float>& params) {
  auto runner = std::make_shared<PolicyRunner>(config, params);
  return [runner](const GridWorld& world, Rng&) { return runner->greedy(world); };
}

EvalReport evaluate(const PlannerConfig& config, const PlannerParams<float>& params, const EvalOptions& options) {
  return evaluate_policy(greedy_policy(config, params), options, std::string(to_string(config.variant)));
}

Policy oracle_policy() {
  return [](const GridWorld& world, Rng&) {
    const auto path = oracle::shortest_path(world.static_obstacles(), world.agent, world.goal, oracle::PathMetric::Hops);
    if (!path.reachable || path.path.size() < 2) return 0;
    return *direction_of(path.path[1].row - world.agent.row, path.path[1].col - world.agent.col);
  };
}

Policy random_policy() {
  return [](const GridWorld&, Rng& rng) {
    std::uniform_int_distribution<int> pick(0, kActionCount - 1);
    return pick(rng);
  };
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["variant"] = report.variant;
  j["env"] = report.env;
  j["sizes"] = nlohmann::json::array();
  for (const auto& s : report.sizes) {
    j["sizes"].push_back({{"size", s.size},
                          {"episodes", s.episodes},
                          {"wins", s.wins},
                          {"win_rate", s.win_rate},
                          {"mean_distance_to_optimal", s.mean_distance_to_optimal},
                          {"reward_min", s.reward_min},
                          {"reward_mean", s.reward_mean},
                          {"reward_max", s.reward_max},
                          {"seed_win_rates", s.seed_win_rates}});
  }
  return j.dump(2) + "\n";
}

}  // namespace vprop
