#include "vprop/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>

namespace vprop::oracle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTieEps = 1e-9;

struct QueueEntry {
  double key;
  std::uint64_t seq;
  std::size_t node;
  bool operator>(const QueueEntry& o) const { return std::tie(key, seq) > std::tie(o.key, o.seq); }
};
using MinQueue = std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>>;

double edge_weight(int action, PathMetric metric) {
  return metric == PathMetric::Hops ? 1.0 : move_cost(action);
}

double octile(Cell a, Cell b) {
  const int dr = std::abs(a.row - b.row), dc = std::abs(a.col - b.col);
  return std::max(dr, dc) + (std::sqrt(2.0) - 1.0) * std::min(dr, dc);
}

void check_fields(const Fields64& f, bool need_out) {
  const auto n = static_cast<std::size_t>(f.rows) * f.cols;
  if (f.rows <= 0 || f.cols <= 0 || f.reward.size() != n || f.propagation.size() != n ||
      (need_out && f.reward_out.size() != n)) {
    throw std::invalid_argument("oracle: field sizes do not match grid " + std::to_string(f.rows) +
                                "x" + std::to_string(f.cols));
  }
}

}  // namespace

PathResult shortest_path(const WallGrid& walls, Cell from, Cell to, PathMetric metric) {
  if (walls.blocked(from) || walls.blocked(to)) {
    throw std::invalid_argument("shortest_path: endpoints must be walkable");
  }
  const std::size_t n = static_cast<std::size_t>(walls.rows()) * walls.cols();
  std::vector<double> dist(n, kInf);
  std::vector<std::int64_t> parent(n, -1);
  std::vector<char> done(n, 0);
  MinQueue queue;
  std::uint64_t seq = 0;
  dist[walls.index(from)] = 0;
  queue.push({0.0, seq++, walls.index(from)});
  while (!queue.empty()) {
    const auto [d, s, u] = queue.top();
    queue.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == walls.index(to)) break;
    const Cell cu = walls.cell_at(u);
    for (int a = 0; a < kActionCount; ++a) {
      const Cell cv = step_toward(cu, a);
      if (walls.blocked(cv)) continue;
      const std::size_t v = walls.index(cv);
      const double nd = d + edge_weight(a, metric);
      if (nd < dist[v] - kTieEps) {
        dist[v] = nd;
        parent[v] = static_cast<std::int64_t>(u);
        queue.push({nd, seq++, v});
      }
    }
  }
  PathResult result;
  const std::size_t goal = walls.index(to);
  if (dist[goal] == kInf) return result;
  result.reachable = true;
  for (std::int64_t v = static_cast<std::int64_t>(goal); v >= 0; v = parent[static_cast<std::size_t>(v)]) {
    result.path.push_back(walls.cell_at(static_cast<std::size_t>(v)));
  }
  std::reverse(result.path.begin(), result.path.end());
  result.steps = static_cast<int>(result.path.size()) - 1;
  for (std::size_t k = 1; k < result.path.size(); ++k) {
    const bool diagonal = result.path[k].row != result.path[k - 1].row &&
                          result.path[k].col != result.path[k - 1].col;
    result.cost += diagonal ? std::sqrt(2.0) : 1.0;
  }
  return result;
}

std::vector<int> hop_distances(const WallGrid& walls, Cell from) {
  std::vector<int> dist(static_cast<std::size_t>(walls.rows()) * walls.cols(), -1);
  if (walls.blocked(from)) return dist;
  std::queue<Cell> frontier;
  dist[walls.index(from)] = 0;
  frontier.push(from);
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop();
    for (int a = 0; a < kActionCount; ++a) {
      const Cell nb = step_toward(c, a);
      if (walls.blocked(nb) || dist[walls.index(nb)] >= 0) continue;
      dist[walls.index(nb)] = dist[walls.index(c)] + 1;
      frontier.push(nb);
    }
  }
  return dist;
}

std::optional<int> astar_next_move(const WallGrid& walls, const WallGrid& occupied, Cell from,
                                   Cell target) {
  if (from == target || walls.blocked(target)) return std::nullopt;
  auto passable = [&](Cell c) {
    return !walls.blocked(c) && (c == target || !occupied.blocked(c));
  };
  const std::size_t n = static_cast<std::size_t>(walls.rows()) * walls.cols();
  std::vector<double> g(n, kInf);
  std::vector<int> first_move(n, -1);
  std::vector<char> closed(n, 0);
  MinQueue open;
  std::uint64_t seq = 0;
  g[walls.index(from)] = 0;
  open.push({octile(from, target), seq++, walls.index(from)});
  while (!open.empty()) {
    const auto entry = open.top();
    open.pop();
    const std::size_t u = entry.node;
    if (closed[u]) continue;
    closed[u] = 1;
    const Cell cu = walls.cell_at(u);
    if (cu == target) return first_move[u];
    for (int a = 0; a < kActionCount; ++a) {
      const Cell cv = step_toward(cu, a);
      if (!passable(cv)) continue;
      const std::size_t v = walls.index(cv);
      const double ng = g[u] + move_cost(a);
      if (ng < g[v] - kTieEps) {
        g[v] = ng;
        first_move[v] = cu == from ? a : first_move[u];
        open.push({ng + octile(cv, target), seq++, v});
      }
    }
  }
  return std::nullopt;
}

std::vector<double> mvprop_fixed_point(const Fields64& f) {
  check_fields(f, false);
  const int rows = f.rows, cols = f.cols;
  std::vector<double> v = f.reward;
  std::vector<double> next(v.size());
  const std::size_t max_iters = 16 * v.size() + 64;
  for (std::size_t it = 0; it < max_iters; ++it) {
    double change = 0;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        double best = v[i];
        for (const Cell d : kDirections) {
          const int nr = r + d.row, nc = c + d.col;
          const double vn = (nr >= 0 && nr < rows && nc >= 0 && nc < cols)
                                ? v[static_cast<std::size_t>(nr) * cols + nc]
                                : 0.0;
          best = std::max(best, f.reward[i] + f.propagation[i] * (vn - f.reward[i]));
        }
        next[i] = best;
        change = std::max(change, std::abs(best - v[i]));
      }
    }
    v.swap(next);
    if (change < 1e-12) return v;
  }
  throw std::runtime_error("mvprop_fixed_point: no convergence");
}

std::vector<double> vprop_fixed_point(const Fields64& f) {
  check_fields(f, true);
  const int rows = f.rows, cols = f.cols;
  std::vector<double> v(f.reward.size(), 0.0);
  std::vector<double> next(v.size());
  constexpr std::size_t kMaxIters = 1'000'000;
  for (std::size_t it = 0; it < kMaxIters; ++it) {
    double change = 0;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        double best = v[i];
        for (const Cell d : kDirections) {
          const int nr = r + d.row, nc = c + d.col;
          if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
          const std::size_t j = static_cast<std::size_t>(nr) * cols + nc;
          best = std::max(best, f.propagation[i] * v[j] + f.reward[j] - f.reward_out[i]);
        }
        if (best > 1e6) {
          throw std::runtime_error("vprop_fixed_point: value " + std::to_string(best) + " at (" +
                                   std::to_string(r) + "," + std::to_string(c) + ") after " +
                                   std::to_string(it) + " iterations exceeds 1e6; the fields "
                                   "contain a positive-gain cycle");
        }
        next[i] = best;
        change = std::max(change, std::abs(best - v[i]));
      }
    }
    v.swap(next);
    if (change < 1e-12) return v;
  }
  throw std::runtime_error("vprop_fixed_point: no convergence");
}

std::vector<double> mvprop_path_enumeration(const Fields64& f) {
  check_fields(f, false);
  const int rows = f.rows, cols = f.cols;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (n > 16) throw std::invalid_argument("mvprop_path_enumeration: at most 16 cells");
  const double max_reward = *std::max_element(f.reward.begin(), f.reward.end());

  // A path c0..cm is worth sum_{k<m} W_k r_k (1 - p_k) + W_m r_m with
  // W_k = prod_{l<k} p_l. All such values are convex combinations of r̄,
  // so acc + W * max r̄ bounds every extension.
  std::vector<double> result(n, 0.0);
  std::vector<char> on_path(n, 0);
  std::function<void(std::size_t, double, double, double&)> walk =
      [&](std::size_t u, double acc, double weight, double& best) {
        best = std::max(best, acc + weight * f.reward[u]);
        const double acc_next = acc + weight * f.reward[u] * (1.0 - f.propagation[u]);
        const double weight_next = weight * f.propagation[u];
        if (acc_next + weight_next * max_reward <= best) return;
        on_path[u] = 1;
        const int r = static_cast<int>(u) / cols, c = static_cast<int>(u) % cols;
        for (const Cell d : kDirections) {
          const int nr = r + d.row, nc = c + d.col;
          if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) {
            // Off-grid neighbours hold value 0 and end the path.
            best = std::max(best, acc_next);
            continue;
          }
          const std::size_t v = static_cast<std::size_t>(nr) * cols + nc;
          if (!on_path[v]) walk(v, acc_next, weight_next, best);
        }
        on_path[u] = 0;
      };
  for (std::size_t s = 0; s < n; ++s) {
    double best = 0;
    walk(s, 0.0, 1.0, best);
    result[s] = best;
  }
  return result;
}

std::vector<double> propagation_path_cost(int rows, int cols, std::span<const double> propagation,
                                          Cell goal) {
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (propagation.size() != n) throw std::invalid_argument("propagation_path_cost: size mismatch");
  WallGrid grid(rows, cols);
  std::vector<double> dist(n, kInf);
  MinQueue queue;
  std::uint64_t seq = 0;
  dist[grid.index(goal)] = 0;
  queue.push({0.0, seq++, grid.index(goal)});
  while (!queue.empty()) {
    const auto [d, s, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    const Cell cu = grid.cell_at(u);
    for (int a = 0; a < kActionCount; ++a) {
      const Cell cv = step_toward(cu, a);
      if (!grid.inside(cv)) continue;
      const std::size_t v = grid.index(cv);
      if (propagation[v] <= 0) continue;
      const double nd = d - std::log(propagation[v]);
      if (nd < dist[v]) {
        dist[v] = nd;
        queue.push({nd, seq++, v});
      }
    }
  }
  return dist;
}

}  // namespace vprop::oracle
