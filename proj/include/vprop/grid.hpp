#pragma once

// Cells, the eight movement directions and wall grids shared by every
// module.

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace vprop {

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline constexpr int kActionCount = 8;

/// Fixed action order: N, NE, E, SE, S, SW, W, NW. Row index grows southward.
inline constexpr std::array<Cell, kActionCount> kDirections{{
    {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};

inline constexpr std::array<std::string_view, kActionCount> kDirectionNames{
    "N", "NE", "E", "SE", "S", "SW", "W", "NW"};

inline bool is_diagonal(int action) { return action % 2 == 1; }

/// L2 length of one move in `action`'s direction: 1 or sqrt(2).
double move_cost(int action);

inline Cell step_toward(Cell c, int action) {
  return {c.row + kDirections[action].row, c.col + kDirections[action].col};
}

/// Direction index for a unit displacement, or nullopt.
std::optional<int> direction_of(int drow, int dcol);
std::optional<int> direction_from_name(std::string_view name);

/// Boolean occupancy grid, row-major.
class WallGrid {
 public:
  WallGrid() = default;
  WallGrid(int rows, int cols) : rows_(rows), cols_(cols), cells_(static_cast<std::size_t>(rows) * cols, 0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool inside(Cell c) const { return c.row >= 0 && c.row < rows_ && c.col >= 0 && c.col < cols_; }
  /// Out-of-grid cells count as blocked.
  bool blocked(Cell c) const { return !inside(c) || cells_[index(c)] != 0; }
  void set(Cell c, bool wall) { cells_[index(c)] = wall ? 1 : 0; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row) * cols_ + c.col; }
  Cell cell_at(std::size_t index) const {
    return {static_cast<int>(index / cols_), static_cast<int>(index % cols_)};
  }
  std::size_t count() const;

  friend bool operator==(const WallGrid&, const WallGrid&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> cells_;
};

}  // namespace vprop
