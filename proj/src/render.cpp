#include "vprop/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vprop {

GrayImage value_image(std::span<const float> values, const GridWorld& world) {
  const int rows = world.rows();
  const int cols = world.cols();
  if (values.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("value_image: " + std::to_string(values.size()) + " values for a " +
                                std::to_string(rows) + "x" + std::to_string(cols) + " map");
  }
  GrayImage img{cols, rows, std::vector<std::uint8_t>(values.size())};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  const auto obstacles = world.static_obstacles();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t k = static_cast<std::size_t>(r) * cols + c;
      std::uint8_t px = 128;
      if (range > 0) px = static_cast<std::uint8_t>(std::lround(255.0 * (values[k] - *lo) / range));
      if (obstacles.blocked({r, c})) px = 0;
      if (world.goal == Cell{r, c}) px = 255;
      img.pixels[k] = px;
    }
  }
  return img;
}

std::string encode_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw std::runtime_error("pgm: truncated header");
    return bytes.substr(start, pos - start);
  };
  if (token() != "P5") throw std::runtime_error("pgm: not a binary PGM (P5)");
  GrayImage img;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    if (std::stoi(token()) != 255) throw std::runtime_error("pgm: maxval must be 255");
  } catch (const std::logic_error&) {
    throw std::runtime_error("pgm: malformed header");
  }
  ++pos;  // single whitespace before the raster
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (img.width <= 0 || img.height <= 0 || bytes.size() != pos + n) throw std::runtime_error("pgm: raster size mismatch");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

char action_glyph(int action) {
  static constexpr char kGlyphs[kActionCount] = {'^', '9', '>', '3', 'v', '1', '<', '7'};
  if (action < 0 || action >= kActionCount) return '.';
  return kGlyphs[action];
}

std::vector<int> greedy_action_map(const PlannerConfig& config, const PlannerParams<float>& params,
                                   const GridWorld& world) {
  NoGradScope no_grad;
  const int rows = world.rows();
  const int cols = world.cols();
  std::vector<int> out(static_cast<std::size_t>(rows) * cols, -1);
  const auto obstacles = world.static_obstacles();
  const auto values = plan(config, params, observe(world), choose_depth(rows, cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (obstacles.blocked({r, c}) || world.goal == Cell{r, c}) continue;
      const auto logits = readout_logits(config, params, values, {r, c}, rows, cols);
      out[static_cast<std::size_t>(r) * cols + c] = greedy_action(logits.values());
    }
  }
  return out;
}

std::string ascii_render(const GridWorld& world, std::span<const int> actions, std::span<const Cell> path) {
  const int rows = world.rows();
  const int cols = world.cols();
  if (actions.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("ascii_render: action map does not match the map size");
  }
  const auto obstacles = world.static_obstacles();
  std::string out;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Cell cell{r, c};
      char glyph = action_glyph(actions[static_cast<std::size_t>(r) * cols + c]);
      if (obstacles.blocked(cell)) glyph = '#';
      if (world.agent == cell) glyph = 'A';
      if (world.goal == cell) glyph = 'G';
      out += glyph;
      out += std::find(path.begin(), path.end(), cell) != path.end() ? '*' : ' ';
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  }
  return out;
}

void render_value_map(const PlannerConfig& config, const PlannerParams<float>& params, const GridWorld& world,
                      std::span<const Cell> path, const std::string& stem) {
  NoGradScope no_grad;
  const auto values = plan(config, params, observe(world), choose_depth(world.rows(), world.cols()));
  const auto image = value_image(values.v.values(), world);
  const auto actions = greedy_action_map(config, params, world);

  std::ofstream pgm(stem + ".pgm", std::ios::binary);
  if (!pgm) throw std::runtime_error("cannot write image: " + stem + ".pgm");
  pgm << encode_pgm(image);
  std::ofstream txt(stem + ".txt", std::ios::binary);
  if (!txt) throw std::runtime_error("cannot write text rendering: " + stem + ".txt");
  txt << ascii_render(world, actions, path);
  if (!pgm || !txt) throw std::runtime_error("failed writing rendering: " + stem);
}

}  // namespace vprop
