#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vprop/checkpoint.hpp"
#include "vprop/config.hpp"
#include "vprop/evaluate.hpp"
#include "vprop/gradcheck_suite.hpp"
#include "vprop/map_io.hpp"
#include "vprop/oracle.hpp"
#include "vprop/render.hpp"
#include "vprop/trainer.hpp"

namespace fs = std::filesystem;
using namespace vprop;

namespace {

std::string checkpoint_name(int episode) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint_%07d.vprp", episode);
  return buf;
}

int run_train(const std::string& config_path, RunConfig config, bool have_config_file) {
  if (have_config_file) config = read_config(config_path);
  fs::create_directories(config.output_dir);
  const fs::path dir(config.output_dir);
  write_config(config, (dir / "config.json").string());

  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
  metrics << metrics_header() << "\n";

  const TrainerConfig tc = trainer_config(config);
  auto params = init_params<float>(tc.planner, config.seed);
  TrainCallbacks callbacks;
  int wins = 0;
  int window = 0;
  callbacks.on_episode = [&](const EpisodeMetrics& m) {
    metrics << metrics_row(m) << "\n";
    wins += m.win;
    if (++window == 500) {
      std::cerr << "episode " << m.episode + 1 << " win rate " << wins / 500.0 << " curriculum bound "
                << m.curriculum_bound << "\n";
      wins = window = 0;
    }
  };
  callbacks.on_checkpoint = [&](int episode, const PlannerParams<float>& p) {
    save_checkpoint((dir / checkpoint_name(episode)).string(), tc.planner, p);
  };
  const auto summary = train(tc, params, callbacks);
  save_checkpoint((dir / "final.vprp").string(), tc.planner, params);
  std::cerr << "trained " << summary.episodes << " episodes, " << summary.env_steps << " steps, " << summary.updates
            << " updates\n";
  return 0;
}

std::vector<std::uint64_t> seed_list(int count, std::uint64_t first) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Value propagation planners on grid worlds"};
  app.require_subcommand(1);

  RunConfig train_cfg;
  std::string train_config_path;
  std::string variant_name = "mvprop";
  std::string train_env = "static";
  bool no_curriculum = false;
  bool no_wall_clock = false;
  auto* train_cmd = app.add_subcommand("train", "Train a planner; writes config.json, metrics.csv and checkpoints");
  train_cmd->add_option("--config", train_config_path, "Run configuration file (overrides other flags)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--variant", variant_name, "vin, vprop or mvprop");
  train_cmd->add_option("--embed-kernel", train_cfg.embed_kernel, "First embedding conv size: 1, 3, or 0 for the variant default")
      ->check(CLI::IsMember({0, 1, 3}));
  train_cmd->add_option("--env", train_env, "Environment kind");
  train_cmd->add_option("--sizes", train_cfg.train_sizes, "Training map sizes")->delimiter(',');
  train_cmd->add_option("--eval-sizes", train_cfg.eval_sizes, "Evaluation map sizes")->delimiter(',');
  train_cmd->add_option("--episodes", train_cfg.episodes, "Episode budget");
  train_cmd->add_option("--seed", train_cfg.seed, "Random seed");
  train_cmd->add_option("--out", train_cfg.output_dir, "Output directory");
  train_cmd->add_option("--checkpoint-every", train_cfg.checkpoint_every, "Episodes between checkpoints (0 = final only)");
  train_cmd->add_option("--curriculum-period", train_cfg.schedule.period, "Episodes between curriculum increments");
  train_cmd->add_option("--update-period", train_cfg.hp.update_period, "Environment steps between updates");
  train_cmd->add_flag("--no-curriculum", no_curriculum, "Sample start/goal pairs without a path-length bound");
  train_cmd->add_flag("--no-wall-clock", no_wall_clock, "Write 0 in the wall-clock column (reproducible metrics)");

  std::string eval_checkpoint;
  std::string eval_kind = "static";
  std::string eval_out = "eval_report.json";
  EvalOptions eval_opts;
  int eval_seed_count = 5;
  std::uint64_t eval_first_seed = 1000;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with the greedy policy");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--sizes", eval_opts.sizes, "Map sizes")->delimiter(',');
  eval_cmd->add_option("--episodes", eval_opts.episodes_per_size, "Episodes per size and seed");
  eval_cmd->add_option("--kind", eval_kind, "Environment kind");
  eval_cmd->add_option("--seeds", eval_seed_count, "Number of evaluation seeds");
  eval_cmd->add_option("--first-seed", eval_first_seed, "First evaluation seed");
  eval_cmd->add_option("--out", eval_out, "Report file (JSON)");

  std::string render_checkpoint;
  std::string render_map;
  std::string render_kind = "static";
  int render_size = 16;
  std::uint64_t render_seed = 1;
  std::string render_out = "value_map";
  auto* render_cmd = app.add_subcommand("render", "Write a PGM value map and a text rendering with greedy arrows");
  render_cmd->add_option("--checkpoint", render_checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--map", render_map, "Map file (otherwise a map is generated)")->check(CLI::ExistingFile);
  render_cmd->add_option("--kind", render_kind, "Environment kind for a generated map");
  render_cmd->add_option("--size", render_size, "Size of a generated map");
  render_cmd->add_option("--seed", render_seed, "Seed of a generated map");
  render_cmd->add_option("--out", render_out, "Output stem; writes <stem>.pgm and <stem>.txt");

  std::string gen_kind = "static";
  int gen_size = 8;
  int gen_count = 10;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "maps";
  auto* gen_cmd = app.add_subcommand("genmaps", "Write seeded map files");
  gen_cmd->add_option("--kind", gen_kind, "Environment kind");
  gen_cmd->add_option("--size", gen_size, "Map side length");
  gen_cmd->add_option("--count", gen_count, "Number of maps");
  gen_cmd->add_option("--seed", gen_seed, "Seed");
  gen_cmd->add_option("--out", gen_out, "Output directory");

  GradCheckOptions gc_opts;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Run the finite-difference gradient check suite");
  gc_cmd->add_option("--instances", gc_opts.instances, "Random instances per check");
  gc_cmd->add_option("--seed", gc_opts.seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      train_cfg.variant = variant_from_string(variant_name);
      train_cfg.env = env_kind_from_string(train_env);
      train_cfg.curriculum = !no_curriculum;
      train_cfg.wall_clock = !no_wall_clock;
      return run_train(train_config_path, train_cfg, !train_config_path.empty());
    }
    if (*eval_cmd) {
      PlannerConfig config;
      const auto params = load_checkpoint(eval_checkpoint, &config);
      eval_opts.env = env_kind_from_string(eval_kind);
      eval_opts.seeds = seed_list(eval_seed_count, eval_first_seed);
      const auto report = evaluate(config, params, eval_opts);
      std::ofstream out(eval_out, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write report: " + eval_out);
      out << report_to_json(report);
      for (const auto& s : report.sizes) {
        std::printf("size %d: win rate %.3f, distance to optimal %.3f, reward %.3f [%.3f, %.3f], %d episodes\n",
                    s.size, s.win_rate, s.mean_distance_to_optimal, s.reward_mean, s.reward_min, s.reward_max,
                    s.episodes);
      }
      return 0;
    }
    if (*render_cmd) {
      PlannerConfig config;
      const auto params = load_checkpoint(render_checkpoint, &config);
      const GridWorld world = render_map.empty()
                                  ? generate(env_kind_from_string(render_kind), render_size, render_size, render_seed)
                                  : read_map(render_map);
      Rng rng(render_seed);
      const auto trace = run_episode(world, greedy_policy(config, params), rng);
      std::vector<Cell> path{world.agent};
      GridWorld replay = world;
      Rng replay_rng(render_seed);
      for (int a : trace.actions) {
        step(replay, a, replay_rng);
        path.push_back(replay.agent);
      }
      render_value_map(config, params, world, path, render_out);
      std::printf("outcome %s after %d steps (oracle %d)\n", std::string(to_string(trace.outcome)).c_str(),
                  trace.steps(), trace.optimal_hops);
      return 0;
    }
    if (*gen_cmd) {
      const auto kind = env_kind_from_string(gen_kind);
      fs::create_directories(gen_out);
      for (int i = 0; i < gen_count; ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "map_%04d.txt", i);
        write_map(fs::path(gen_out) / name, generate(kind, gen_size, gen_size, episode_seed(gen_seed, gen_size, i)));
      }
      return 0;
    }
    if (*gc_cmd) {
      const auto results = run_gradcheck_suite(gc_opts);
      std::fputs(format_gradcheck(results).c_str(), stdout);
      for (const auto& r : results) {
        if (!r.passed) return 1;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
