#pragma once

// Exact references: shortest paths on 8-connected grids and 64-bit
// fixed-point / path-enumeration solutions of the propagation recurrences.
// Everything here is plain scalar code, independent of the tensor engine.

#include <optional>
#include <span>
#include <vector>

#include "vprop/grid.hpp"

namespace vprop::oracle {

enum class PathMetric { Hops, L2 };

struct PathResult {
  bool reachable = false;
  int steps = 0;      // hop count of `path`
  double cost = 0.0;  // L2 length of `path`
  std::vector<Cell> path;
};

/// Dijkstra over walkable cells. Neighbours are expanded in action order and
/// only strictly better labels replace existing ones.
PathResult shortest_path(const WallGrid& walls, Cell from, Cell to, PathMetric metric);

/// Hop distance from `from` to every cell; -1 where unreachable.
std::vector<int> hop_distances(const WallGrid& walls, Cell from);

/// First move of an A* path (L2 costs, octile heuristic) from `from` to
/// `target`, treating `occupied` cells as blocked in addition to walls.
/// nullopt means stay.
std::optional<int> astar_next_move(const WallGrid& walls, const WallGrid& occupied, Cell from,
                                   Cell target);

/// Scalar fields over a rows x cols grid, row-major.
struct Fields64 {
  int rows = 0;
  int cols = 0;
  std::vector<double> reward;      // r̄ (MVProp) or r̄in (VProp)
  std::vector<double> reward_out;  // r̄out, VProp only
  std::vector<double> propagation; // p
};

/// MVProp recurrence iterated until the largest change is below 1e-12.
std::vector<double> mvprop_fixed_point(const Fields64& f);

/// VProp recurrence iterated until the largest change is below 1e-12.
/// Throws if values exceed 1e6 (a positive-gain cycle with p close to 1).
std::vector<double> vprop_fixed_point(const Fields64& f);

/// MVProp values by enumerating every simple 8-connected path. Limited to
/// 16 cells.
std::vector<double> mvprop_path_enumeration(const Fields64& f);

/// Dijkstra from `goal` where entering cell x costs -log p(x); cells with
/// p = 0 are impassable. Returns +inf for unreachable cells.
std::vector<double> propagation_path_cost(int rows, int cols, std::span<const double> propagation,
                                          Cell goal);

}  // namespace vprop::oracle
