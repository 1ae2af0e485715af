#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vprop/envworld.hpp"
#include "vprop/planners.hpp"
#include "vprop/trainer.hpp"

namespace vprop {

struct RunConfig {
  Variant variant = Variant::MVProp;
  int embed_kernel = 0;  // 0: the variant default on static maps, 3 on dynamic ones
  EnvKind env = EnvKind::Static;
  std::vector<int> train_sizes{8};
  std::vector<int> eval_sizes{8, 16, 32};
  int episodes = 1000;
  std::uint64_t seed = 1;
  Hyperparams hp;
  bool curriculum = true;
  CurriculumSchedule schedule;
  int checkpoint_every = 0;
  bool wall_clock = true;
  std::string output_dir = "run";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Canonical text: JSON with sorted keys, two-space indent, trailing newline.
std::string config_to_text(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys are an error.
RunConfig config_from_text(const std::string& text);

void write_config(const RunConfig& config, const std::string& path);
RunConfig read_config(const std::string& path);

TrainerConfig trainer_config(const RunConfig& config);

}  // namespace vprop
