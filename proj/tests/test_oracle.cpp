#include <doctest.h>

#include <cmath>
#include <random>

#include "vprop/envworld.hpp"
#include "vprop/oracle.hpp"

using namespace vprop;
using namespace vprop::oracle;

namespace {

int chebyshev(Cell a, Cell b) { return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col)); }

Fields64 random_fields(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  Fields64 f{rows, cols, {}, {}, {}};
  for (int i = 0; i < rows * cols; ++i) {
    f.reward.push_back(u(rng));
    f.propagation.push_back(u(rng));
  }
  return f;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("shortest path basics") {
  WallGrid open(5, 5);
  const auto adj = shortest_path(open, {2, 2}, {2, 3}, PathMetric::Hops);
  CHECK(adj.reachable);
  CHECK(adj.steps == 1);

  const auto corner = shortest_path(open, {0, 0}, {4, 4}, PathMetric::L2);
  CHECK(corner.steps == 4);
  CHECK(corner.cost == doctest::Approx(4 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(corner.path.size() == 5);
  CHECK(corner.path.front() == Cell{0, 0});
  CHECK(corner.path.back() == Cell{4, 4});
}

TEST_CASE("detour around a wall column with one gap") {
  // Wall at column 2 except row 4. From (0,0) to (0,4) every path passes
  // through (4,2): 4 hops down to the gap and 4 back up.
  WallGrid walls(5, 5);
  for (int r = 0; r < 4; ++r) walls.set({r, 2}, true);
  const auto hops = shortest_path(walls, {0, 0}, {0, 4}, PathMetric::Hops);
  CHECK(hops.steps == 8);
  CHECK(std::find(hops.path.begin(), hops.path.end(), Cell{4, 2}) != hops.path.end());
  for (std::size_t k = 1; k < hops.path.size(); ++k) CHECK(chebyshev(hops.path[k - 1], hops.path[k]) == 1);
  // L2: two diagonal-heavy legs of 4 moves: (0,0)->(4,2) costs 2√2 + 2.
  const auto l2 = shortest_path(walls, {0, 0}, {0, 4}, PathMetric::L2);
  CHECK(l2.cost == doctest::Approx(2 * (2 * std::sqrt(2.0) + 2)).epsilon(1e-12));
}

TEST_CASE("unreachable and invalid endpoints") {
  WallGrid walls(5, 5);
  for (int r = 0; r < 5; ++r) walls.set({r, 2}, true);
  CHECK_FALSE(shortest_path(walls, {0, 0}, {0, 4}, PathMetric::Hops).reachable);
  CHECK_THROWS(shortest_path(walls, {0, 2}, {0, 4}, PathMetric::Hops));
  const auto d = hop_distances(walls, {0, 0});
  CHECK(d[walls.index({0, 4})] == -1);
  CHECK(d[walls.index({4, 1})] == 4);
}

TEST_CASE("dijkstra hop metric equals BFS on random 12x12 maps") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const GridWorld w = generate(EnvKind::Static, 12, 12, seed);
    const auto bfs = hop_distances(w.walls, w.agent);
    Rng rng(seed);
    for (int k = 0; k < 5; ++k) {
      std::uniform_int_distribution<int> cell(1, 10);
      const Cell target{cell(rng), cell(rng)};
      if (w.walls.blocked(target)) continue;
      const auto r = shortest_path(w.walls, w.agent, target, PathMetric::Hops);
      const int expected = bfs[w.walls.index(target)];
      CHECK(r.reachable == (expected >= 0));
      if (r.reachable) {
        CHECK(r.steps == expected);
        CHECK(r.steps == static_cast<int>(r.path.size()) - 1);
        CHECK(r.cost >= r.steps - 1e-12);
        CHECK(r.cost <= r.steps * std::sqrt(2.0) + 1e-12);
      }
    }
  }
}

TEST_CASE("A* next move") {
  WallGrid walls(7, 7);
  WallGrid occupied(7, 7);
  CHECK(astar_next_move(walls, occupied, {3, 1}, {3, 5}) == 2);  // E
  CHECK(astar_next_move(walls, occupied, {5, 3}, {1, 3}) == 0);  // N
  CHECK(astar_next_move(walls, occupied, {5, 1}, {1, 5}) == 1);  // NE

  WallGrid boxed(7, 7);
  for (const auto& d : kDirections) boxed.set({3 + d.row, 3 + d.col}, true);
  CHECK_FALSE(astar_next_move(boxed, occupied, {0, 0}, {3, 3}).has_value());

  // The chosen step lies on some L2-shortest path.
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const GridWorld w = generate(EnvKind::Static, 10, 10, seed);
    const auto move = astar_next_move(w.walls, WallGrid(10, 10), w.goal, w.agent);
    REQUIRE(move.has_value());
    const Cell next = step_toward(w.goal, *move);
    const double total = shortest_path(w.walls, w.goal, w.agent, PathMetric::L2).cost;
    const double rest = next == w.agent ? 0.0 : shortest_path(w.walls, next, w.agent, PathMetric::L2).cost;
    CHECK(move_cost(*move) + rest == doctest::Approx(total).epsilon(1e-9));
  }
}

TEST_CASE("mvprop fixed point") {
  SUBCASE("zero reward gives zero values") {
    std::mt19937_64 rng(1);
    auto f = random_fields(5, 5, rng);
    std::fill(f.reward.begin(), f.reward.end(), 0.0);
    for (double v : mvprop_fixed_point(f)) CHECK(v == 0.0);
  }
  SUBCASE("single goal, uniform p gives p^chebyshev") {
    for (double p : {0.3, 0.5, 0.9}) {
      Fields64 f{7, 6, std::vector<double>(42, 0.0), {}, std::vector<double>(42, p)};
      const Cell goal{2, 4};
      f.reward[goal.row * 6 + goal.col] = 1.0;
      const auto v = mvprop_fixed_point(f);
      for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 6; ++c) CHECK(std::abs(v[r * 6 + c] - std::pow(p, chebyshev({r, c}, goal))) < 1e-12);
    }
  }
  SUBCASE("agrees with path enumeration on 3x3 instances") {
    std::mt19937_64 rng(20);
    for (int seed = 0; seed < 20; ++seed) {
      const auto f = random_fields(3, 3, rng);
      const auto a = mvprop_fixed_point(f);
      const auto b = mvprop_path_enumeration(f);
      for (int i = 0; i < 9; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
    }
  }
  SUBCASE("exp(-path cost) equals the single-goal fixed point") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 30; ++trial) {
      const int rows = 4 + trial % 5, cols = 3 + trial % 6;
      Fields64 f{rows, cols, std::vector<double>(rows * cols, 0.0), {}, {}};
      for (int i = 0; i < rows * cols; ++i) f.propagation.push_back(u(rng) < 0.25 ? 0.0 : u(rng));
      const Cell goal{trial % rows, (trial * 3) % cols};
      f.reward[goal.row * cols + goal.col] = 1.0;
      const auto v = mvprop_fixed_point(f);
      const auto cost = propagation_path_cost(rows, cols, f.propagation, goal);
      for (int i = 0; i < rows * cols; ++i) {
        const double expected = std::isinf(cost[i]) ? 0.0 : std::exp(-cost[i]);
        CHECK(std::abs(v[i] - expected) < 1e-9);
      }
    }
  }
}

TEST_CASE("vprop fixed point") {
  SUBCASE("uniform equal in/out rewards with p = 0 give zero") {
    std::mt19937_64 rng(3);
    auto f = random_fields(4, 4, rng);
    std::fill(f.reward.begin(), f.reward.end(), 0.4);
    f.reward_out = f.reward;
    std::fill(f.propagation.begin(), f.propagation.end(), 0.0);
    for (double v : vprop_fixed_point(f)) CHECK(v == 0.0);
    auto g = random_fields(4, 4, rng);
    g.reward_out = g.reward;
    for (double v : vprop_fixed_point(g)) CHECK(v >= 0.0);
  }
  SUBCASE("linear decay from an absorbing goal") {
    // p = 1 except at the goal, r̄in = 1 at the goal, r̄out = 0.1: a cell at
    // distance d collects 1 on entering the goal and pays 0.1 per move.
    const int n = 15;
    const Cell goal{7, 3};
    Fields64 f{n, n, std::vector<double>(n * n, 0.0), std::vector<double>(n * n, 0.1), std::vector<double>(n * n, 1.0)};
    f.reward[goal.row * n + goal.col] = 1.0;
    f.propagation[goal.row * n + goal.col] = 0.0;
    const auto v = vprop_fixed_point(f);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const int d = chebyshev({r, c}, goal);
        const double expected = d == 0 ? 0.0 : std::max(0.0, 1.0 - 0.1 * d);
        CHECK(std::abs(v[r * n + c] - expected) < 1e-12);
      }
    }
  }
  SUBCASE("positive-gain cycles are reported") {
    Fields64 f{3, 3, std::vector<double>(9, 0.0), std::vector<double>(9, 0.1), std::vector<double>(9, 1.0)};
    f.reward[4] = 1.0;
    CHECK_THROWS_AS(vprop_fixed_point(f), std::runtime_error);
  }
}

}  // TEST_SUITE
