#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "vprop/envworld.hpp"
#include "vprop/map_io.hpp"
#include "vprop/oracle.hpp"

using namespace vprop;

namespace {

// Open map with a wall ring: agent and goal placed by hand.
GridWorld open_world(int rows, int cols, Cell agent, Cell goal) {
  GridWorld w;
  w.walls = WallGrid(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (r == 0 || c == 0 || r == rows - 1 || c == cols - 1) w.walls.set({r, c}, true);
  w.agent = agent;
  w.goal = goal;
  w.max_steps = max_steps_for(w);
  return w;
}

std::size_t interior_walls(const GridWorld& w) {
  std::size_t n = 0;
  for (int r = 1; r < w.rows() - 1; ++r)
    for (int c = 1; c < w.cols() - 1; ++c) n += w.walls.blocked({r, c});
  return n;
}

bool ring_intact(const GridWorld& w) {
  for (int r = 0; r < w.rows(); ++r)
    for (int c = 0; c < w.cols(); ++c)
      if ((r == 0 || c == 0 || r == w.rows() - 1 || c == w.cols() - 1) && !w.walls.blocked({r, c})) return false;
  return true;
}

bool exclusive(const GridWorld& w) {
  std::set<std::pair<int, int>> seen;
  for (const auto& e : w.entities) {
    if (!e.alive) continue;
    if (!seen.insert({e.pos.row, e.pos.col}).second) return false;
    if (w.walls.blocked(e.pos)) return false;
  }
  return true;
}

const EnvKind kAllKinds[] = {EnvKind::Static,      EnvKind::Avalanche,    EnvKind::EnemiesOnly, EnvKind::Mixed,
                             EnvKind::Adversarial, EnvKind::EnemiesAstar, EnvKind::MixedAstar};

}  // namespace

TEST_SUITE("envworld") {

TEST_CASE("generation is seeded and reproducible") {
  for (auto kind : kAllKinds) {
    const auto a = generate(kind, 8, 8, 42);
    const auto b = generate(kind, 8, 8, 42);
    CHECK(format_map(a) == format_map(b));
    CHECK(observe(a) == observe(b));
  }
  CHECK(format_map(generate(EnvKind::Static, 8, 8, 42)) != format_map(generate(EnvKind::Static, 8, 8, 43)));
  CHECK_THROWS_AS(generate(EnvKind::Static, 5, 8, 1), std::invalid_argument);
}

TEST_CASE("static maps: exact wall count, ring, solvable") {
  for (int size : {8, 12, 32}) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto w = generate(EnvKind::Static, size, size, seed);
      const int area = (size - 2) * (size - 2);
      CHECK(interior_walls(w) == static_cast<std::size_t>(std::lround(0.30 * area)));
      CHECK(ring_intact(w));
      CHECK_FALSE(w.walls.blocked(w.agent));
      CHECK_FALSE(w.walls.blocked(w.goal));
      CHECK_FALSE(w.agent == w.goal);
      CHECK(oracle::hop_distances(w.walls, w.agent)[w.walls.index(w.goal)] > 0);
    }
  }
}

TEST_CASE("dynamic presets have the documented densities") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int area = 14 * 14;
    auto count = [](const GridWorld& w, EntityKind k) {
      return std::count_if(w.entities.begin(), w.entities.end(), [k](const Entity& e) { return e.kind == k; });
    };
    const auto en = generate(EnvKind::EnemiesOnly, 16, 16, seed);
    CHECK(count(en, EntityKind::Noop) == std::lround(0.2 * area));
    for (const auto& e : en.entities) CHECK(e.epsilon == 0.5);

    const auto mixed = generate(EnvKind::Mixed, 16, 16, seed);
    const long total = std::lround(0.2 * area);
    CHECK(count(mixed, EntityKind::WallBlock) + count(mixed, EntityKind::Noop) == total);
    CHECK(count(mixed, EntityKind::WallBlock) == total / 2);

    const auto av = generate(EnvKind::Avalanche, 16, 16, seed);
    const auto falling = count(av, EntityKind::Directional);
    CHECK(falling >= std::lround(0.2 * area));
    CHECK(falling <= std::lround(0.3 * area));
    for (const auto& e : av.entities) {
      CHECK(e.epsilon == 1.0);
      CHECK(e.direction == 4);
    }
    CHECK(count(generate(EnvKind::Adversarial, 8, 8, seed), EntityKind::Adversarial) == 1);
    CHECK(count(generate(EnvKind::Adversarial, 16, 16, seed), EntityKind::Adversarial) == 2);
    CHECK(count(generate(EnvKind::Adversarial, 64, 64, seed), EntityKind::Adversarial) == 4);
    for (auto kind : kAllKinds) {
      const auto w = generate(kind, 12, 12, seed);
      CHECK(exclusive(w));
      for (const auto& e : w.entities) {
        CHECK_FALSE(e.pos == w.goal);
        if (e.kind != EntityKind::WallBlock) {
          CHECK(std::max(std::abs(e.pos.row - w.agent.row), std::abs(e.pos.col - w.agent.col)) > 1);
        }
      }
    }
  }
}

TEST_CASE("step rewards follow the reward table") {
  Rng rng(1);
  SUBCASE("cardinal move costs 0.01") {
    auto w = open_world(8, 8, {3, 3}, {6, 6});
    const auto r = step(w, 2, rng);
    CHECK(r.reward == -0.01);
    CHECK_FALSE(r.terminal);
    CHECK(w.agent == Cell{3, 4});
  }
  SUBCASE("diagonal move costs 0.01 sqrt 2") {
    auto w = open_world(8, 8, {3, 3}, {6, 6});
    const auto r = step(w, 3, rng);
    CHECK(r.reward == -0.01 * std::sqrt(2.0));
    CHECK(std::abs(r.reward + 0.014142) < 1e-6);
  }
  SUBCASE("walking into a wall") {
    auto w = open_world(8, 8, {1, 1}, {6, 6});
    const auto r = step(w, 0, rng);
    CHECK(r.reward == -1.0);
    CHECK(r.terminal);
    CHECK(r.outcome == Outcome::WallDeath);
    CHECK_THROWS_AS(step(w, 2, rng), std::logic_error);
  }
  SUBCASE("reaching the goal") {
    auto w = open_world(8, 8, {3, 3}, {3, 4});
    const auto r = step(w, 2, rng);
    CHECK(r.reward == 1.0);
    CHECK(r.outcome == Outcome::Win);
  }
  SUBCASE("timeout keeps the movement reward") {
    auto w = open_world(8, 8, {3, 3}, {6, 6});
    CHECK(w.max_steps == 9);
    StepResult r;
    for (int k = 0; k < 9; ++k) r = step(w, k % 2 == 0 ? 2 : 6, rng);
    CHECK(r.outcome == Outcome::Timeout);
    CHECK(r.reward == -0.01);
    CHECK(w.step_count == w.max_steps);
  }
  SUBCASE("stepping onto an entity or being landed on") {
    auto w = open_world(8, 8, {3, 3}, {6, 6});
    w.entities.push_back({{3, 4}, EntityKind::Noop, 0.0, 4, true});
    const auto r = step(w, 2, rng);
    CHECK(r.outcome == Outcome::Caught);
    CHECK(r.reward == -1.0);

    auto v = open_world(8, 8, {3, 3}, {6, 6});
    v.entities.push_back({{1, 4}, EntityKind::Directional, 1.0, 4, true});
    const auto s = step(v, 1, rng);  // agent to (2,4); the entity falls onto it
    CHECK(s.outcome == Outcome::Caught);
    CHECK(s.reward == -1.0);
  }
  SUBCASE("wall-block entities act as walls") {
    auto w = open_world(8, 8, {3, 3}, {6, 6});
    w.entities.push_back({{3, 4}, EntityKind::WallBlock, 0.0, 4, true});
    CHECK(step(w, 2, rng).outcome == Outcome::WallDeath);
  }
}

TEST_CASE("max_steps rule") {
  CHECK(max_steps_for_hops(5) == 15);
  CHECK(max_steps_for_hops(1) == 8);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto w = generate(EnvKind::Static, 64, 64, seed);
    const auto path = oracle::shortest_path(w.walls, w.agent, w.goal, oracle::PathMetric::Hops);
    CHECK(w.max_steps == std::max(3 * path.steps, 8));
  }
}

TEST_CASE("entity policies") {
  Rng rng(5);
  SUBCASE("noop with epsilon 0 never moves") {
    auto w = open_world(8, 8, {1, 1}, {6, 6});
    w.entities.push_back({{4, 4}, EntityKind::Noop, 0.0, 4, true});
    for (int k = 0; k < 100; ++k) CHECK(entity_step(w.entities[0], w, rng) == Cell{4, 4});
  }
  SUBCASE("falling entity advances one row per step until blocked") {
    auto w = open_world(10, 10, {1, 1}, {1, 8});
    w.walls.set({6, 5}, true);
    w.entities.push_back({{2, 5}, EntityKind::Directional, 1.0, 4, true});
    for (int row = 3; row <= 5; ++row) {
      w.entities[0].pos = entity_step(w.entities[0], w, rng);
      CHECK(w.entities[0].pos == Cell{row, 5});
    }
    CHECK(entity_step(w.entities[0], w, rng) == Cell{5, 5});
  }
  SUBCASE("falling entity leaving the bottom re-enters at the top") {
    auto w = open_world(10, 10, {4, 4}, {4, 8});
    w.entities.push_back({{8, 3}, EntityKind::Directional, 1.0, 4, true});
    const Cell next = entity_step(w.entities[0], w, rng);
    CHECK(next.row == 1);
    CHECK_FALSE(w.walls.blocked(next));
  }
  SUBCASE("adversary closes in by one A* step") {
    auto w = open_world(10, 10, {4, 2}, {8, 8});
    w.entities.push_back({{4, 4}, EntityKind::Adversarial, 0.0, 4, true});
    const auto before = oracle::shortest_path(w.walls, w.entities[0].pos, w.agent, oracle::PathMetric::Hops).steps;
    const Cell next = entity_step(w.entities[0], w, rng);
    const auto after = oracle::shortest_path(w.walls, next, w.agent, oracle::PathMetric::Hops).steps;
    CHECK(before == 2);
    CHECK(after == 1);
  }
}

TEST_CASE("random-policy rollouts keep the invariants") {
  Rng rng(99);
  int steps = 0;
  std::uint64_t seed = 0;
  const double lo = -0.01 * std::sqrt(2.0);
  while (steps < 10000) {
    auto w = generate(kAllKinds[seed % 7], 10, 10, seed);
    ++seed;
    std::uniform_int_distribution<int> pick(0, 7);
    int length = 0;
    while (!w.terminal()) {
      const auto r = step(w, pick(rng), rng);
      ++length;
      ++steps;
      CHECK(exclusive(w));
      const bool in_band = r.reward >= lo - 1e-15 && r.reward <= -0.01 + 1e-15;
      CHECK((r.reward == -1.0 || r.reward == 1.0 || in_band));
      CHECK(r.terminal == (r.outcome != Outcome::Ongoing));
    }
    CHECK(length <= w.max_steps);
  }
}

TEST_CASE("same seed and actions give the same trajectory") {
  for (auto kind : kAllKinds) {
    auto run = [&] {
      auto w = generate(kind, 10, 10, 7);
      Rng rng(3);
      std::vector<double> rewards;
      const int actions[] = {2, 3, 4, 4, 2, 1, 0, 6, 5, 4, 3, 2};
      for (int a : actions) {
        if (w.terminal()) break;
        rewards.push_back(step(w, a, rng).reward);
      }
      return std::make_pair(rewards, format_map(w));
    };
    CHECK(run() == run());
  }
}

TEST_CASE("observations") {
  auto w = open_world(6, 6, {2, 2}, {3, 4});
  auto obs = observe(w);
  int walls = 0, goal = 0, others = 0;
  for (int ch = 0; ch < kObservationChannels; ++ch)
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) {
        const int v = obs.at(ch, r, c);
        CHECK((v == 0 || v == 1));
        (ch == 0 ? walls : ch == 1 ? goal : others) += v;
      }
  CHECK(walls == 20);
  CHECK(goal == 1);
  CHECK(others == 0);
  CHECK(obs.agent == Cell{2, 2});

  const auto m = generate(EnvKind::Mixed, 12, 12, 4);
  const auto o = observe(m);
  int counts[kObservationChannels] = {};
  for (int ch = 0; ch < kObservationChannels; ++ch)
    for (int r = 0; r < 12; ++r)
      for (int c = 0; c < 12; ++c) counts[ch] += o.at(ch, r, c);
  const auto noops = std::count_if(m.entities.begin(), m.entities.end(), [](const Entity& e) { return e.kind == EntityKind::Noop; });
  CHECK(counts[kNoopChannel] == noops);
  CHECK(static_cast<std::size_t>(counts[kWallChannel]) == m.static_obstacles().count());
}

TEST_CASE("curriculum") {
  Curriculum cur(CurriculumSchedule{}, 40);
  CHECK(cur.bound() == 4);
  CHECK(cur.accepts_hops(3));
  CHECK_FALSE(cur.accepts_hops(9));
  for (int k = 0; k < 2499; ++k) cur.episode_finished();
  CHECK(cur.bound() == 4);
  cur.episode_finished();
  CHECK(cur.bound() == 6);
  Curriculum capped(CurriculumSchedule{4, 2, 1}, 7);
  int last = capped.bound();
  for (int k = 0; k < 10; ++k) {
    capped.episode_finished();
    CHECK(capped.bound() >= last);
    last = capped.bound();
  }
  CHECK(capped.bound() == 7);
  CHECK(curriculum_ceiling(12, 12) == 24);

  Rng rng(2);
  auto w = generate(EnvKind::Static, 12, 12, 2);
  for (int k = 0; k < 20; ++k) {
    if (resample_endpoints(w, rng, 4)) {
      CHECK(optimal_steps(w) >= 1);
      CHECK(optimal_steps(w) <= 4);
      CHECK(w.max_steps == max_steps_for(w));
    }
  }
}

TEST_CASE("map text format round-trips") {
  for (auto kind : kAllKinds) {
    const auto w = generate(kind, 9, 11, 17);
    const auto text = format_map(w);
    CHECK(text.rfind("vpmap 11 9 ", 0) == 0);
    const auto back = parse_map(text);
    CHECK(format_map(back) == text);
    CHECK(back.walls == w.walls);
    CHECK(back.agent == w.agent);
    CHECK(back.goal == w.goal);
    CHECK(back.entities.size() == w.entities.size());
    CHECK(observe(back) == observe(w));
  }
  CHECK_THROWS_AS(parse_map("vpmap 3 3 static 1\n###\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_map("garbage"), std::runtime_error);

  const auto path = std::filesystem::temp_directory_path() / "vprop_map_roundtrip.txt";
  const auto w = generate(EnvKind::Static, 8, 8, 1);
  write_map(path, w);
  CHECK(format_map(read_map(path)) == format_map(w));
  std::filesystem::remove(path);
  CHECK_THROWS(read_map("/nonexistent/dir/map.txt"));
}

}  // TEST_SUITE
