#pragma once

// Value-map images (binary PGM) and text renderings with greedy arrows.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vprop/envworld.hpp"
#include "vprop/planners.hpp"

namespace vprop {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, height rows of width
  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

/// One pixel per cell; values mapped linearly from [min v, max v] to
/// [0, 255] (128 when v is constant), walls black and the goal white.
GrayImage value_image(std::span<const float> values, const GridWorld& world);

std::string encode_pgm(const GrayImage& image);
/// Accepts P5 with maxval 255. Throws on malformed input.
GrayImage decode_pgm(const std::string& bytes);

/// Arrow glyph for each action: ^ 9 > 3 v 1 < 7 (numeric keypad for diagonals).
char action_glyph(int action);

/// Greedy action for the agent placed on every walkable cell, -1 elsewhere.
std::vector<int> greedy_action_map(const PlannerConfig& config, const PlannerParams<float>& params,
                                   const GridWorld& world);

/// Two characters per cell: '#' wall, 'G' goal, 'A' agent, otherwise the
/// arrow glyph; the second character is '*' on cells of `path`.
std::string ascii_render(const GridWorld& world, std::span<const int> actions, std::span<const Cell> path = {});

/// Writes `<stem>.pgm` and `<stem>.txt` for the planner's value map of `world`.
void render_value_map(const PlannerConfig& config, const PlannerParams<float>& params, const GridWorld& world,
                      std::span<const Cell> path, const std::string& stem);

}  // namespace vprop
