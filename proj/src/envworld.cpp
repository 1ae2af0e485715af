#include "vprop/envworld.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vprop/oracle.hpp"

namespace vprop {

namespace {

constexpr int kMaxResamples = 1000;
constexpr double kStepPenalty = 0.01;

struct KindName {
  EnvKind kind;
  std::string_view name;
};
constexpr KindName kKindNames[] = {
    {EnvKind::Static, "static"},           {EnvKind::Avalanche, "avalanche"},
    {EnvKind::EnemiesOnly, "enemies_only"}, {EnvKind::Mixed, "mixed"},
    {EnvKind::Adversarial, "adversarial"}, {EnvKind::EnemiesAstar, "enemies_astar"},
    {EnvKind::MixedAstar, "mixed_astar"},
};

bool on_border(const WallGrid& g, Cell c) {
  return c.row == 0 || c.col == 0 || c.row == g.rows() - 1 || c.col == g.cols() - 1;
}

WallGrid ring(int rows, int cols) {
  WallGrid walls(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (r == 0 || c == 0 || r == rows - 1 || c == cols - 1) walls.set({r, c}, true);
    }
  }
  return walls;
}

std::vector<Cell> interior_cells(int rows, int cols) {
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(rows - 2) * (cols - 2));
  for (int r = 1; r < rows - 1; ++r) {
    for (int c = 1; c < cols - 1; ++c) cells.push_back({r, c});
  }
  return cells;
}

int chebyshev(Cell a, Cell b) { return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col)); }

int adversary_count(int rows, int cols) {
  const int side = std::max(rows, cols);
  int count = 1;
  for (int s = 16; s <= side && count < 6; s *= 2) ++count;
  return count;
}

// Entities spawn on free interior cells away from the agent's 3x3
// neighbourhood and off the goal.
void spawn_entities(GridWorld& world, Rng& rng, EntityKind kind, int count, double epsilon,
                    int direction) {
  std::vector<Cell> candidates;
  const auto obstacles = world.static_obstacles();
  for (const Cell c : interior_cells(world.rows(), world.cols())) {
    if (obstacles.blocked(c) || c == world.goal || chebyshev(c, world.agent) <= 1 ||
        world.entity_at(c) >= 0) {
      continue;
    }
    candidates.push_back(c);
  }
  std::shuffle(candidates.begin(), candidates.end(), rng);
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(count, 0)), candidates.size());
  for (std::size_t k = 0; k < n; ++k) {
    world.entities.push_back(Entity{candidates[k], kind, epsilon, direction, true});
  }
}

bool pick_endpoints(GridWorld& world, Rng& rng, int max_hops) {
  const auto obstacles = world.static_obstacles();
  std::vector<Cell> free;
  for (const Cell c : interior_cells(world.rows(), world.cols())) {
    if (!obstacles.blocked(c) && world.entity_at(c) < 0) free.push_back(c);
  }
  if (free.size() < 2) return false;
  std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const Cell agent = free[pick(rng)];
    const auto dist = oracle::hop_distances(obstacles, agent);
    std::vector<Cell> goals;
    for (const Cell c : free) {
      const int d = dist[obstacles.index(c)];
      if (d >= 1 && d <= max_hops) goals.push_back(c);
    }
    if (goals.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick_goal(0, goals.size() - 1);
    world.agent = agent;
    world.goal = goals[pick_goal(rng)];
    return true;
  }
  return false;
}

}  // namespace

std::string_view to_string(EnvKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "unknown";
}

EnvKind env_kind_from_string(std::string_view name) {
  for (const auto& kn : kKindNames) {
    if (kn.name == name) return kn.kind;
  }
  throw std::invalid_argument("unknown environment kind '" + std::string(name) + "'");
}

std::string_view to_string(EntityKind kind) {
  switch (kind) {
    case EntityKind::WallBlock: return "wall_block";
    case EntityKind::Noop: return "noop";
    case EntityKind::Directional: return "directional";
    case EntityKind::Adversarial: return "adversarial";
  }
  return "unknown";
}

EntityKind entity_kind_from_string(std::string_view name) {
  for (auto k : {EntityKind::WallBlock, EntityKind::Noop, EntityKind::Directional,
                 EntityKind::Adversarial}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown entity kind '" + std::string(name) + "'");
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Ongoing: return "ongoing";
    case Outcome::Win: return "win";
    case Outcome::WallDeath: return "wall_death";
    case Outcome::Caught: return "caught";
    case Outcome::Timeout: return "timeout";
  }
  return "unknown";
}

WallGrid GridWorld::static_obstacles() const {
  WallGrid out = walls;
  for (const auto& e : entities) {
    if (e.alive && e.kind == EntityKind::WallBlock) out.set(e.pos, true);
  }
  return out;
}

int GridWorld::entity_at(Cell c) const {
  for (std::size_t k = 0; k < entities.size(); ++k) {
    if (entities[k].alive && entities[k].pos == c) return static_cast<int>(k);
  }
  return -1;
}

bool GridWorld::has_moving_entities() const {
  return std::any_of(entities.begin(), entities.end(), [](const Entity& e) {
    return e.alive && e.kind != EntityKind::WallBlock;
  });
}

GridWorld generate(EnvKind kind, int rows, int cols, Rng& rng) {
  if (rows < 6 || cols < 6) {
    throw std::invalid_argument("generate: map must be at least 6x6, got " + std::to_string(rows) +
                                "x" + std::to_string(cols));
  }
  const int area = (rows - 2) * (cols - 2);
  for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
    GridWorld world;
    world.kind = kind;
    world.walls = ring(rows, cols);
    world.agent = world.goal = {-rows, -cols};  // placed below
    if (kind == EnvKind::Static) {
      auto cells = interior_cells(rows, cols);
      std::shuffle(cells.begin(), cells.end(), rng);
      const auto wall_count = static_cast<std::size_t>(std::lround(kStaticWallRatio * area));
      for (std::size_t k = 0; k < wall_count; ++k) world.walls.set(cells[k], true);
    }
    if (kind == EnvKind::Mixed) {
      // Fixed walls are laid before endpoints so reachability accounts for them.
      const int total = static_cast<int>(std::lround(0.20 * area));
      spawn_entities(world, rng, EntityKind::WallBlock, total / 2, 0.0, 4);
    }
    if (kind == EnvKind::MixedAstar) {
      const int extra = static_cast<int>(std::lround(0.10 * area));
      spawn_entities(world, rng, EntityKind::WallBlock, extra / 2, 0.0, 4);
    }
    if (!pick_endpoints(world, rng, std::numeric_limits<int>::max())) continue;

    switch (kind) {
      case EnvKind::Static:
        break;
      case EnvKind::Avalanche: {
        std::uniform_real_distribution<double> density(0.20, 0.30);
        spawn_entities(world, rng, EntityKind::Directional,
                       static_cast<int>(std::lround(density(rng) * area)), 1.0, 4);
        break;
      }
      case EnvKind::EnemiesOnly:
        spawn_entities(world, rng, EntityKind::Noop, static_cast<int>(std::lround(0.20 * area)), 0.5, 4);
        break;
      case EnvKind::Mixed: {
        const int total = static_cast<int>(std::lround(0.20 * area));
        spawn_entities(world, rng, EntityKind::Noop, total - total / 2, 0.2, 4);
        break;
      }
      case EnvKind::Adversarial:
        spawn_entities(world, rng, EntityKind::Adversarial, adversary_count(rows, cols), 0.0, 4);
        break;
      case EnvKind::EnemiesAstar:
        spawn_entities(world, rng, EntityKind::Adversarial, static_cast<int>(std::ceil(0.10 * area)), 0.0, 4);
        break;
      case EnvKind::MixedAstar: {
        spawn_entities(world, rng, EntityKind::Adversarial, static_cast<int>(std::ceil(0.10 * area)), 0.0, 4);
        const int extra = static_cast<int>(std::lround(0.10 * area));
        spawn_entities(world, rng, EntityKind::Noop, extra - extra / 2, 0.2, 4);
        break;
      }
    }
    world.max_steps = max_steps_for(world);
    return world;
  }
  throw std::runtime_error("generate: no solvable " + std::string(to_string(kind)) + " " +
                           std::to_string(rows) + "x" + std::to_string(cols) + " map after " +
                           std::to_string(kMaxResamples) + " attempts");
}

GridWorld generate(EnvKind kind, int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  GridWorld world = generate(kind, rows, cols, rng);
  world.seed = seed;
  return world;
}

bool resample_endpoints(GridWorld& world, Rng& rng, int max_hops) {
  GridWorld trial = world;
  if (!pick_endpoints(trial, rng, max_hops)) return false;
  // Entities must not start on or next to the new agent cell.
  for (const auto& e : trial.entities) {
    if (e.alive && e.kind != EntityKind::WallBlock && chebyshev(e.pos, trial.agent) <= 1) return false;
  }
  trial.step_count = 0;
  trial.outcome = Outcome::Ongoing;
  trial.max_steps = max_steps_for(trial);
  world = std::move(trial);
  return true;
}

int optimal_steps(const GridWorld& world) {
  const auto obstacles = world.static_obstacles();
  if (obstacles.blocked(world.agent) || obstacles.blocked(world.goal)) return -1;
  return oracle::hop_distances(obstacles, world.agent)[obstacles.index(world.goal)];
}

int max_steps_for_hops(int optimal_hops) { return std::max(3 * optimal_hops, 8); }

int max_steps_for(const GridWorld& world) {
  const int hops = optimal_steps(world);
  if (hops < 0) throw std::logic_error("max_steps_for: goal unreachable");
  return max_steps_for_hops(hops);
}

Cell entity_step(const Entity& entity, const GridWorld& world, Rng& rng) {
  const auto obstacles = world.static_obstacles();
  auto free_for_entity = [&](Cell c) {
    const int other = world.entity_at(c);
    return !obstacles.blocked(c) && (other < 0 || world.entities[other].pos == entity.pos);
  };
  switch (entity.kind) {
    case EntityKind::WallBlock:
      return entity.pos;
    case EntityKind::Noop: {
      std::bernoulli_distribution moves(entity.epsilon);
      if (!moves(rng)) return entity.pos;
      std::uniform_int_distribution<int> dir(0, kActionCount - 1);
      const Cell target = step_toward(entity.pos, dir(rng));
      return free_for_entity(target) ? target : entity.pos;
    }
    case EntityKind::Directional: {
      std::bernoulli_distribution moves(entity.epsilon);
      if (!moves(rng)) return entity.pos;
      const Cell target = step_toward(entity.pos, entity.direction);
      if (world.walls.inside(target) && on_border(world.walls, target)) {
        // Leaving the playable area: re-enter on the opposite interior edge.
        const Cell d = kDirections[entity.direction];
        std::vector<Cell> spots;
        for (const Cell c : interior_cells(world.rows(), world.cols())) {
          const bool edge = d.row > 0   ? c.row == 1
                            : d.row < 0 ? c.row == world.rows() - 2
                            : d.col > 0 ? c.col == 1
                                        : c.col == world.cols() - 2;
          if (edge && !obstacles.blocked(c) && world.entity_at(c) < 0 && !(c == world.agent)) {
            spots.push_back(c);
          }
        }
        if (spots.empty()) return entity.pos;
        std::uniform_int_distribution<std::size_t> pick(0, spots.size() - 1);
        return spots[pick(rng)];
      }
      return free_for_entity(target) ? target : entity.pos;
    }
    case EntityKind::Adversarial: {
      WallGrid occupied(world.rows(), world.cols());
      for (const auto& e : world.entities) {
        if (e.alive && !(e.pos == entity.pos)) occupied.set(e.pos, true);
      }
      const auto move = oracle::astar_next_move(obstacles, occupied, entity.pos, world.agent);
      return move ? step_toward(entity.pos, *move) : entity.pos;
    }
  }
  return entity.pos;
}

StepResult step(GridWorld& world, int action, Rng& rng) {
  if (world.terminal()) throw std::logic_error("step: world is terminal");
  if (action < 0 || action >= kActionCount) {
    throw std::invalid_argument("step: action " + std::to_string(action) + " out of range");
  }
  StepResult result;
  ++world.step_count;
  const Cell target = step_toward(world.agent, action);
  const auto obstacles = world.static_obstacles();
  auto finish = [&](Outcome outcome, double reward) {
    world.outcome = outcome;
    result.outcome = outcome;
    result.reward = reward;
    result.terminal = outcome != Outcome::Ongoing;
    return result;
  };

  if (obstacles.blocked(target)) return finish(Outcome::WallDeath, -1.0);
  if (world.entity_at(target) >= 0) {
    world.agent = target;
    return finish(Outcome::Caught, -1.0);
  }
  world.agent = target;
  if (target == world.goal) return finish(Outcome::Win, 1.0);

  const double move_reward = -kStepPenalty * move_cost(action);
  for (auto& e : world.entities) {
    if (!e.alive || e.kind == EntityKind::WallBlock) continue;
    e.pos = entity_step(e, world, rng);
    if (e.pos == world.agent) return finish(Outcome::Caught, -1.0);
  }
  if (world.step_count >= world.max_steps) return finish(Outcome::Timeout, move_reward);
  return finish(Outcome::Ongoing, move_reward);
}

GridObservation observe(const GridWorld& world) {
  GridObservation obs;
  obs.rows = world.rows();
  obs.cols = world.cols();
  obs.agent = world.agent;
  obs.planes.assign(static_cast<std::size_t>(kObservationChannels) * obs.rows * obs.cols, 0);
  auto set = [&](int channel, Cell c) {
    obs.planes[(static_cast<std::size_t>(channel) * obs.rows + c.row) * obs.cols + c.col] = 1;
  };
  for (int r = 0; r < obs.rows; ++r) {
    for (int c = 0; c < obs.cols; ++c) {
      if (world.walls.blocked({r, c})) set(kWallChannel, {r, c});
    }
  }
  set(kGoalChannel, world.goal);
  for (const auto& e : world.entities) {
    if (!e.alive) continue;
    switch (e.kind) {
      case EntityKind::WallBlock: set(kWallChannel, e.pos); break;
      case EntityKind::Noop: set(kNoopChannel, e.pos); break;
      case EntityKind::Directional: set(kDirectionalChannel, e.pos); break;
      case EntityKind::Adversarial: set(kAdversarialChannel, e.pos); break;
    }
  }
  return obs;
}

bool Curriculum::accepts(const GridWorld& world) const { return accepts_hops(optimal_steps(world)); }

void Curriculum::episode_finished() {
  ++episodes_;
  if (schedule_.period > 0 && episodes_ % schedule_.period == 0) {
    bound_ = std::min(bound_ + schedule_.increment, ceiling_);
  }
}

int curriculum_ceiling(int rows, int cols) { return rows + cols; }

}  // namespace vprop
