#pragma once

// Procedural grid worlds: static mazes and the dynamic presets with moving
// entities, reward/termination rules, observations and the training
// curriculum.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vprop/grid.hpp"

namespace vprop {

using Rng = std::mt19937_64;

enum class EnvKind {
  Static,
  Avalanche,
  EnemiesOnly,
  Mixed,
  Adversarial,
  // Densities as described in the MazeBase appendix: ceil(10%) A* chasers,
  // and the same chasers plus 10% static/stochastic entities.
  EnemiesAstar,
  MixedAstar,
};

std::string_view to_string(EnvKind kind);
EnvKind env_kind_from_string(std::string_view name);

enum class EntityKind { WallBlock, Noop, Directional, Adversarial };

std::string_view to_string(EntityKind kind);
EntityKind entity_kind_from_string(std::string_view name);

struct Entity {
  Cell pos;
  EntityKind kind = EntityKind::Noop;
  double epsilon = 0.0;
  int direction = 4;  // S; meaningful for Directional only
  bool alive = true;
};

enum class Outcome { Ongoing, Win, WallDeath, Caught, Timeout };

std::string_view to_string(Outcome outcome);

struct StepResult {
  double reward = 0.0;
  bool terminal = false;
  Outcome outcome = Outcome::Ongoing;
};

inline constexpr int kObservationChannels = 5;

enum ObservationChannel : int {
  kWallChannel = 0,
  kGoalChannel = 1,
  kNoopChannel = 2,
  kDirectionalChannel = 3,
  kAdversarialChannel = 4,
};

/// One-hot planes [channel][row][col] plus the agent position.
struct GridObservation {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> planes;
  Cell agent;

  std::uint8_t at(int channel, int row, int col) const {
    return planes[(static_cast<std::size_t>(channel) * rows + row) * cols + col];
  }
  friend bool operator==(const GridObservation&, const GridObservation&) = default;
};

struct GridWorld {
  EnvKind kind = EnvKind::Static;
  WallGrid walls;  // enclosing ring + interior walls
  Cell goal;
  Cell agent;
  std::vector<Entity> entities;
  int step_count = 0;
  int max_steps = 8;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::Ongoing;

  int rows() const { return walls.rows(); }
  int cols() const { return walls.cols(); }
  bool terminal() const { return outcome != Outcome::Ongoing; }
  /// Walls plus live wall-block entities: what the agent cannot walk into.
  WallGrid static_obstacles() const;
  /// Index of the live entity at `c`, or -1.
  int entity_at(Cell c) const;
  bool has_moving_entities() const;
};

/// Wall density of static maps.
inline constexpr double kStaticWallRatio = 0.30;

/// Fresh seeded world. Static maps are resampled until the goal is reachable
/// from the agent; throws after 1000 failed attempts.
GridWorld generate(EnvKind kind, int rows, int cols, Rng& rng);
/// Same, from a fresh generator seeded with `seed`; the seed is recorded.
GridWorld generate(EnvKind kind, int rows, int cols, std::uint64_t seed);

/// Re-draws agent and goal on the existing map (walls and entities kept),
/// requiring a path of 1..max_hops steps. Returns false if no valid pair was found.
bool resample_endpoints(GridWorld& world, Rng& rng,
                        int max_hops = std::numeric_limits<int>::max());

/// Hop count of the shortest agent-to-goal path over static obstacles; -1
/// when unreachable.
int optimal_steps(const GridWorld& world);

/// 3x the optimal hop count, at least 8.
int max_steps_for(const GridWorld& world);
int max_steps_for_hops(int optimal_hops);

/// Moves the agent, then every live entity in list order.
StepResult step(GridWorld& world, int action, Rng& rng);

/// New position for `entity` under its policy; the caller applies it.
Cell entity_step(const Entity& entity, const GridWorld& world, Rng& rng);

GridObservation observe(const GridWorld& world);

struct CurriculumSchedule {
  int initial = 4;
  int increment = 2;
  int period = 2500;

  friend bool operator==(const CurriculumSchedule&, const CurriculumSchedule&) = default;
};

class Curriculum {
 public:
  Curriculum(CurriculumSchedule schedule, int ceiling)
      : schedule_(schedule), ceiling_(ceiling), bound_(std::min(schedule.initial, ceiling)) {}

  int bound() const { return bound_; }
  int episodes_done() const { return episodes_; }
  /// Accept iff the optimal hop count from the start is within the bound.
  bool accepts(const GridWorld& world) const;
  bool accepts_hops(int optimal_hops) const { return optimal_hops >= 0 && optimal_hops <= bound_; }
  void episode_finished();

 private:
  CurriculumSchedule schedule_;
  int ceiling_;
  int bound_;
  int episodes_ = 0;
};

/// Curriculum ceiling for a rows x cols map: rows + cols hops.
int curriculum_ceiling(int rows, int cols);

}  // namespace vprop
