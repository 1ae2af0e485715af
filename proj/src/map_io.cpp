#include "vprop/map_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace vprop {

namespace {

char entity_glyph(EntityKind kind) {
  switch (kind) {
    case EntityKind::WallBlock: return '#';
    case EntityKind::Noop: return 'N';
    case EntityKind::Directional: return 'D';
    case EntityKind::Adversarial: return 'E';
  }
  return '?';
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw std::runtime_error("map line " + std::to_string(line) + ": " + what);
}

int parse_int(std::string_view s, int line) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) fail(line, "bad integer '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::string format_map(const GridWorld& world) {
  std::ostringstream out;
  out << "vpmap " << world.cols() << ' ' << world.rows() << ' ' << to_string(world.kind) << ' '
      << world.seed << '\n';
  std::vector<std::string> rows(static_cast<std::size_t>(world.rows()), std::string(world.cols(), '.'));
  for (int r = 0; r < world.rows(); ++r) {
    for (int c = 0; c < world.cols(); ++c) {
      if (world.walls.blocked({r, c})) rows[r][c] = '#';
    }
  }
  for (const auto& e : world.entities) {
    if (e.alive) rows[e.pos.row][e.pos.col] = entity_glyph(e.kind);
  }
  rows[world.goal.row][world.goal.col] = 'G';
  rows[world.agent.row][world.agent.col] = 'A';
  for (const auto& row : rows) out << row << '\n';
  for (const auto& e : world.entities) {
    if (!e.alive) continue;
    out << "entity row=" << e.pos.row << " col=" << e.pos.col << " kind=" << to_string(e.kind)
        << " eps=" << format_double(e.epsilon) << " dir=" << kDirectionNames[e.direction] << '\n';
  }
  return out.str();
}

GridWorld parse_map(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 1;
  if (!std::getline(in, line)) fail(lineno, "empty map");
  std::istringstream header(line);
  std::string magic, kind;
  long long dx = 0, dy = 0;
  unsigned long long seed = 0;
  if (!(header >> magic >> dx >> dy >> kind >> seed) || magic != "vpmap") {
    fail(lineno, "expected 'vpmap <dx> <dy> <kind> <seed>'");
  }
  if (dx < 3 || dy < 3 || dx > 4096 || dy > 4096) fail(lineno, "bad dimensions");

  GridWorld world;
  world.kind = env_kind_from_string(kind);
  world.seed = seed;
  world.walls = WallGrid(static_cast<int>(dy), static_cast<int>(dx));
  bool have_agent = false, have_goal = false;
  for (int r = 0; r < dy; ++r) {
    ++lineno;
    if (!std::getline(in, line)) fail(lineno, "missing grid row");
    if (static_cast<long long>(line.size()) != dx) fail(lineno, "row width != " + std::to_string(dx));
    for (int c = 0; c < dx; ++c) {
      switch (line[c]) {
        case '#': world.walls.set({r, c}, true); break;
        case '.': case 'N': case 'D': case 'E': break;
        case 'A': world.agent = {r, c}; have_agent = true; break;
        case 'G': world.goal = {r, c}; have_goal = true; break;
        default: fail(lineno, std::string("unknown cell glyph '") + line[c] + "'");
      }
    }
  }
  if (!have_agent || !have_goal) fail(lineno, "map needs one 'A' and one 'G'");
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    if (word != "entity") fail(lineno, "expected 'entity' line");
    Entity e;
    bool have_row = false, have_col = false, have_kind = false;
    while (fields >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos) fail(lineno, "expected key=value, got '" + word + "'");
      const std::string key = word.substr(0, eq), value = word.substr(eq + 1);
      if (key == "row") { e.pos.row = parse_int(value, lineno); have_row = true; }
      else if (key == "col") { e.pos.col = parse_int(value, lineno); have_col = true; }
      else if (key == "kind") { e.kind = entity_kind_from_string(value); have_kind = true; }
      else if (key == "eps") { e.epsilon = std::stod(value); }
      else if (key == "dir") {
        const auto dir = direction_from_name(value);
        if (!dir) fail(lineno, "unknown direction '" + value + "'");
        e.direction = *dir;
      } else {
        fail(lineno, "unknown key '" + key + "'");
      }
    }
    if (!have_row || !have_col || !have_kind) fail(lineno, "entity needs row, col and kind");
    if (!world.walls.inside(e.pos)) fail(lineno, "entity outside the map");
    if (e.epsilon < 0 || e.epsilon > 1) fail(lineno, "eps must lie in [0,1]");
    if (e.kind == EntityKind::WallBlock) world.walls.set(e.pos, false);
    world.entities.push_back(e);
  }
  const int hops = optimal_steps(world);
  world.max_steps = max_steps_for_hops(std::max(hops, 0));
  return world;
}

void write_map(const std::filesystem::path& path, const GridWorld& world) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_map(world);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

GridWorld read_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_map(buf.str());
}

}  // namespace vprop
