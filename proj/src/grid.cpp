#include "vprop/grid.hpp"

#include <cmath>

namespace vprop {

double move_cost(int action) { return is_diagonal(action) ? std::sqrt(2.0) : 1.0; }

std::optional<int> direction_of(int drow, int dcol) {
  for (int a = 0; a < kActionCount; ++a) {
    if (kDirections[a].row == drow && kDirections[a].col == dcol) return a;
  }
  return std::nullopt;
}

std::optional<int> direction_from_name(std::string_view name) {
  for (int a = 0; a < kActionCount; ++a) {
    if (kDirectionNames[a] == name) return a;
  }
  return std::nullopt;
}

std::size_t WallGrid::count() const {
  std::size_t n = 0;
  for (auto c : cells_) n += c;
  return n;
}

}  // namespace vprop
