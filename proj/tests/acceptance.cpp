#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vprop/checkpoint.hpp"
#include "vprop/config.hpp"
#include "vprop/evaluate.hpp"
#include "vprop/gradcheck_suite.hpp"
#include "vprop/oracle.hpp"
#include "vprop/trainer.hpp"

namespace fs = std::filesystem;
using namespace vprop;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

fs::path g_out;
bool g_reuse = false;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Training runs shared by criteria 1-4.

RunConfig static_run(Variant variant, std::uint64_t seed) {
  RunConfig cfg;
  cfg.variant = variant;
  cfg.env = EnvKind::Static;
  cfg.train_sizes = {8, 10, 12};
  cfg.episodes = 60000;
  cfg.seed = seed;
  cfg.curriculum = true;
  cfg.wall_clock = false;
  return cfg;
}

RunConfig dynamic_run(Variant variant, std::uint64_t seed) {
  RunConfig cfg;
  cfg.variant = variant;
  cfg.env = EnvKind::Avalanche;
  cfg.train_sizes = {8};
  cfg.episodes = 200000;
  cfg.seed = seed;
  cfg.curriculum = false;
  cfg.wall_clock = false;
  return cfg;
}

struct Trained {
  PlannerConfig planner;
  PlannerParams<float> params;
};

std::map<std::string, Trained> g_models;

std::string run_name(const RunConfig& cfg) {
  return std::string(to_string(cfg.env)) + "_" + std::string(to_string(cfg.variant)) + "_s" +
         std::to_string(cfg.seed);
}

const Trained& trained(const RunConfig& cfg) {
  const auto name = run_name(cfg);
  if (auto it = g_models.find(name); it != g_models.end()) return it->second;
  const auto dir = g_out / name;
  const auto ckpt = dir / "final.vprp";
  Trained t;
  if (g_reuse && fs::exists(ckpt) && fs::exists(dir / "config.json") && read_config((dir / "config.json").string()) == cfg) {
    t.params = load_checkpoint(ckpt.string(), &t.planner);
    std::printf("  [%s] reusing %s\n", name.c_str(), ckpt.string().c_str());
  } else {
    fs::create_directories(dir);
    write_config(cfg, (dir / "config.json").string());
    const auto tc = trainer_config(cfg);
    t.planner = tc.planner;
    t.params = init_params<float>(tc.planner, cfg.seed);
    const auto t0 = Clock::now();
    int wins = 0;
    int window = 0;
    TrainCallbacks cb;
    cb.on_episode = [&](const EpisodeMetrics& m) {
      wins += m.win;
      if (++window == 5000) {
        std::printf("  [%s] episode %d, recent win rate %.3f, bound %d, %.0fs\n", name.c_str(), m.episode + 1,
                    wins / 5000.0, m.curriculum_bound, seconds_since(t0));
        std::fflush(stdout);
        wins = window = 0;
      }
    };
    const auto summary = train(tc, t.params, cb);
    save_checkpoint(ckpt.string(), t.planner, t.params);
    std::printf("  [%s] trained %d episodes, %llu updates in %.0fs\n", name.c_str(), summary.episodes,
                static_cast<unsigned long long>(summary.updates), seconds_since(t0));
  }
  return g_models.emplace(name, std::move(t)).first->second;
}

// Held-out evaluation: maps come from the evaluation seed stream, never the
// training stream.
SizeReport held_out(const Trained& model, EnvKind env, int size, int episodes, std::uint64_t seed) {
  EvalOptions opt;
  opt.env = env;
  opt.sizes = {size};
  opt.episodes_per_size = episodes;
  opt.seeds = {seed};
  return evaluate(model.planner, model.params, opt).sizes.at(0);
}

constexpr std::uint64_t kEvalSeed = 9001;

// ---------------------------------------------------------------------------

Verdict static_maze_learning() {
  const auto& model = trained(static_run(Variant::MVProp, 1));
  const auto r = held_out(model, EnvKind::Static, 12, 200, kEvalSeed);
  return {r.win_rate >= 0.95, fmt("12x12 greedy win rate %.3f on %d maps (need >= 0.95)", r.win_rate, r.episodes)};
}

Verdict size_generalization() {
  const auto& model = trained(static_run(Variant::MVProp, 1));
  const auto r = held_out(model, EnvKind::Static, 32, 200, kEvalSeed);
  const bool ok = r.win_rate >= 0.90 && r.wins > 0 && r.mean_distance_to_optimal <= 1.0;
  return {ok, fmt("32x32 win rate %.3f (need >= 0.90), distance to optimal %.3f (need <= 1.0)", r.win_rate,
                  r.mean_distance_to_optimal)};
}

Verdict architecture_ordering() {
  std::map<Variant, double> mean;
  std::string per_seed;
  for (auto variant : {Variant::Vin, Variant::VProp, Variant::MVProp}) {
    double total = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto& model = trained(static_run(variant, seed));
      const double w = held_out(model, EnvKind::Static, 32, 200, kEvalSeed).win_rate;
      total += w;
      per_seed += fmt(" %s/%d=%.3f", std::string(to_string(variant)).c_str(), static_cast<int>(seed), w);
    }
    mean[variant] = total / 3;
  }
  const double gap_top = mean[Variant::MVProp] - mean[Variant::VProp];
  const double gap_low = mean[Variant::VProp] - mean[Variant::Vin];
  const bool ok = gap_top >= 0.10 && gap_low >= 0.10;
  return {ok, fmt("32x32 mean win rate vin %.3f, vprop %.3f, mvprop %.3f (gaps need >= 0.10);", mean[Variant::Vin],
                  mean[Variant::VProp], mean[Variant::MVProp]) +
                  per_seed};
}

Verdict dynamic_environments() {
  const auto& mv = trained(dynamic_run(Variant::MVProp, 1));
  const auto& vin = trained(dynamic_run(Variant::Vin, 1));
  const auto mv8 = held_out(mv, EnvKind::Avalanche, 8, 200, kEvalSeed);
  const auto mv16 = held_out(mv, EnvKind::Avalanche, 16, 200, kEvalSeed);
  const auto vin8 = held_out(vin, EnvKind::Avalanche, 8, 200, kEvalSeed);
  const auto vin16 = held_out(vin, EnvKind::Avalanche, 16, 200, kEvalSeed);
  const bool ok = mv8.win_rate >= 0.70 && mv16.win_rate >= 0.50 && mv8.win_rate - vin8.win_rate >= 0.20;
  return {ok, fmt("avalanche mvprop 8x8 %.3f (need >= 0.70), 16x16 %.3f (need >= 0.50), vin 8x8 %.3f (gap need >= 0.20), "
                  "vin 16x16 %.3f",
                  mv8.win_rate, mv16.win_rate, vin8.win_rate, vin16.win_rate)};
}

// ---------------------------------------------------------------------------

oracle::Fields64 random_fields(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  oracle::Fields64 f{rows, cols, {}, {}, {}};
  for (int i = 0; i < rows * cols; ++i) {
    f.reward.push_back(u(rng));
    f.propagation.push_back(u(rng));
  }
  return f;
}

template <typename T>
Fields<T> to_fields(const oracle::Fields64& f) {
  Fields<T> out;
  out.reward = BasicArray<T>::from({f.rows, f.cols}, std::vector<T>(f.reward.begin(), f.reward.end()));
  out.propagation = BasicArray<T>::from({f.rows, f.cols}, std::vector<T>(f.propagation.begin(), f.propagation.end()));
  return out;
}

Verdict oracle_equivalence() {
  std::mt19937_64 rng(5);
  double worst_fixed = 0;
  for (int n : {3, 5, 8}) {
    for (int i = 0; i < 100; ++i) {
      const auto f = random_fields(n, n, rng);
      const auto expected = oracle::mvprop_fixed_point(f);
      const auto got = mvprop_rollout(to_fields<float>(f), n * n).v;
      for (std::size_t k = 0; k < expected.size(); ++k)
        worst_fixed = std::max(worst_fixed, std::abs(static_cast<double>(got[k]) - expected[k]));
    }
  }
  double worst_enum = 0;
  int instances = 0;
  for (int i = 0; i < 200; ++i) {
    const auto f = random_fields(3, 3, rng);
    const auto expected = oracle::mvprop_path_enumeration(f);
    const auto got = mvprop_rollout(to_fields<double>(f), 9).v;
    for (std::size_t k = 0; k < expected.size(); ++k) worst_enum = std::max(worst_enum, std::abs(got[k] - expected[k]));
    ++instances;
  }
  return {worst_fixed < 1e-5 && worst_enum < 1e-9,
          fmt("max |rollout - fixed point| %.3g (need < 1e-5) over 300 fields; max |rollout - enumeration| %.3g "
              "(need < 1e-9) over %d 3x3 fields",
              worst_fixed, worst_enum, instances)};
}

Verdict closed_form() {
  std::mt19937_64 rng(6);
  double worst = 0;
  int cells = 0;
  for (double p : {0.3, 0.5, 0.9}) {
    for (int n : {5, 8, 12}) {
      for (int i = 0; i < 10; ++i) {
        WallGrid walls(n, n);
        std::bernoulli_distribution wall(0.3);
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < n; ++c) walls.set({r, c}, wall(rng));
        std::uniform_int_distribution<int> pick(0, n - 1);
        const Cell goal{pick(rng), pick(rng)};
        walls.set(goal, false);
        oracle::Fields64 f{n, n, std::vector<double>(n * n, 0.0), {}, std::vector<double>(n * n, p)};
        f.reward[walls.index(goal)] = 1.0;
        for (int k = 0; k < n * n; ++k)
          if (walls.blocked(walls.cell_at(k))) f.propagation[k] = 0.0;
        const auto v = mvprop_rollout(to_fields<double>(f), n * n).v;
        const auto hops = oracle::hop_distances(walls, goal);
        for (int k = 0; k < n * n; ++k) {
          if (hops[k] < 0) continue;
          worst = std::max(worst, std::abs(v[k] - std::pow(p, hops[k])));
          ++cells;
        }
      }
    }
  }
  return {worst < 1e-9, fmt("max |v - p^hops| %.3g over %d reachable cells (need < 1e-9)", worst, cells)};
}

Verdict gradient_integrity() {
  GradCheckOptions opt;
  opt.instances = 50;
  const auto t0 = Clock::now();
  const auto results = run_gradcheck_suite(opt);
  bool ok = !results.empty();
  double worst = 0;
  std::set<std::string> names;
  for (const auto& r : results) {
    ok = ok && r.passed && r.instances >= 50 && r.max_relative_error < 1e-4;
    worst = std::max(worst, r.max_relative_error);
    names.insert(r.name);
  }
  for (const char* required : {"conv2d", "sigmoid", "softmax_logp", "channel_max", "mvprop_rollout", "vprop_rollout",
                               "value_head"}) {
    ok = ok && names.count(required) == 1;
  }
  std::fputs(format_gradcheck(results).c_str(), stdout);
  return {ok, fmt("%zu checks, max relative error %.3g (need < 1e-4), %.0fs", results.size(), worst,
                  seconds_since(t0))};
}

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

Verdict environment_exactness() {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  Rng rng(1);
  {
    // East, South-East, then into the goal.
    GridWorld w = open_world(7, 7, {1, 1}, {3, 4});
    auto r = step(w, 2, rng);
    expect(r.reward == -0.01 && !r.terminal, "cardinal step reward");
    r = step(w, 3, rng);
    expect(r.reward == -0.01 * std::sqrt(2.0) && !r.terminal, "diagonal step reward");
    r = step(w, 3, rng);
    expect(r.reward == 1.0 && r.terminal && r.outcome == Outcome::Win, "goal reward");
  }
  {
    GridWorld w = open_world(7, 7, {1, 1}, {5, 5});
    const auto r = step(w, 0, rng);
    expect(r.reward == -1.0 && r.terminal && r.outcome == Outcome::WallDeath, "wall reward");
  }
  {
    GridWorld w = open_world(7, 7, {3, 3}, {5, 5});
    w.walls.set({3, 4}, true);
    const auto r = step(w, 2, rng);
    expect(r.reward == -1.0 && r.terminal && r.outcome == Outcome::WallDeath, "interior wall reward");
  }
  {
    // Pacing back and forth until the step budget runs out.
    GridWorld w = open_world(12, 12, {1, 1}, {1, 10});
    const int hops = oracle::shortest_path(w.walls, w.agent, w.goal, oracle::PathMetric::Hops).steps;
    expect(w.max_steps == 3 * hops, "max_steps = 3 x hops");
    int steps = 0;
    StepResult r;
    do {
      r = step(w, steps % 2 == 0 ? 4 : 0, rng);
      ++steps;
    } while (!r.terminal);
    expect(steps == 3 * hops && r.outcome == Outcome::Timeout, "timeout after max_steps");
  }
  for (int n : {8, 12, 16, 32, 64}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto w = generate(EnvKind::Static, n, n, seed);
      std::size_t interior = 0;
      for (int r = 1; r < n - 1; ++r)
        for (int c = 1; c < n - 1; ++c) interior += w.walls.blocked({r, c});
      const auto expected = static_cast<std::size_t>(std::llround(0.3 * (n - 2) * (n - 2)));
      expect(interior == expected, fmt("wall count %dx%d seed %d", n, n, static_cast<int>(seed)));
      const int hops = optimal_steps(w);
      expect(w.max_steps == max_steps_for_hops(hops) && (hops < 3 || w.max_steps == 3 * hops),
             fmt("max_steps %dx%d seed %d", n, n, static_cast<int>(seed)));
    }
  }
  std::string detail = failures.empty() ? "reward table, step budget and wall density exact" : "failed:";
  for (const auto& f : failures) detail += " [" + f + "]";
  return {failures.empty(), detail};
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism_and_persistence() {
  auto run = [](const fs::path& dir) {
    RunConfig cfg = static_run(Variant::MVProp, 7);
    cfg.episodes = 300;
    cfg.hp.update_period = 8;
    cfg.hp.batch_size = 32;
    fs::create_directories(dir);
    std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
    metrics << metrics_header() << "\n";
    const auto tc = trainer_config(cfg);
    auto params = init_params<float>(tc.planner, cfg.seed);
    train(tc, params, {[&](const EpisodeMetrics& m) { metrics << metrics_row(m) << "\n"; }, {}});
    save_checkpoint((dir / "final.vprp").string(), tc.planner, params);
    return std::make_pair(tc.planner, params);
  };
  const auto [cfg_a, params_a] = run(g_out / "determinism_a");
  run(g_out / "determinism_b");
  const auto csv_a = read_file(g_out / "determinism_a" / "metrics.csv");
  const bool csv_same = !csv_a.empty() && csv_a == read_file(g_out / "determinism_b" / "metrics.csv");

  PlannerConfig cfg_loaded;
  const auto loaded = load_checkpoint((g_out / "determinism_a" / "final.vprp").string(), &cfg_loaded);
  const auto before = greedy_policy(cfg_a, params_a);
  const auto after = greedy_policy(cfg_loaded, loaded);
  int same = 0;
  const int total = 50;
  for (int i = 0; i < total; ++i) {
    const int size = i % 2 == 0 ? 12 : 16;
    const auto world = generate(EnvKind::Static, size, size, episode_seed(77, size, i));
    Rng r1(i), r2(i);
    same += run_episode(world, before, r1) == run_episode(world, after, r2);
  }
  const bool ok = csv_same && same == total && cfg_loaded == cfg_a;
  return {ok, fmt("metrics CSV identical across runs: %s; %d/%d greedy trajectories identical after reload",
                  csv_same ? "yes" : "no", same, total)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string out = "acceptance_artifacts";
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--out", out, "Directory for trained models and run artifacts");
  app.add_flag("--reuse", g_reuse, "Load previously trained models from --out when their config matches");
  CLI11_PARSE(app, argc, argv);
  g_out = out;
  fs::create_directories(g_out);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"static-maze learning", static_maze_learning},
      {"size generalization", size_generalization},
      {"architecture ordering", architecture_ordering},
      {"dynamic environments", dynamic_environments},
      {"oracle equivalence", oracle_equivalence},
      {"closed-form values", closed_form},
      {"gradient integrity", gradient_integrity},
      {"environment exactness", environment_exactness},
      {"determinism and persistence", determinism_and_persistence},
  };
  // Cheap criteria first so that their verdicts appear before long training runs.
  const int order[] = {5, 6, 7, 8, 9, 1, 2, 3, 4};
  std::vector<std::string> lines;
  int failed = 0;
  for (int id : order) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto& [name, fn] = criteria[id - 1];
    std::printf("criterion %d (%s): running\n", id, name.c_str());
    std::fflush(stdout);
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const auto line = fmt("%s criterion %d (%s): %s [%.0fs]", v.pass ? "PASS" : "FAIL", id, name.c_str(),
                          v.detail.c_str(), seconds_since(t0));
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    lines.push_back(line);
    failed += !v.pass;
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return failed == 0 ? 0 : 1;
}
