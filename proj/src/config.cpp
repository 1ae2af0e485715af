#include "vprop/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace vprop {

namespace {

using nlohmann::json;

json hp_to_json(const Hyperparams& hp) {
  return {{"batch_size", hp.batch_size},       {"critic_lr", hp.critic_lr},
          {"gamma", hp.gamma},                 {"importance_cap", hp.importance_cap},
          {"policy_lr", hp.policy_lr},         {"regularizer", hp.regularizer},
          {"replay_capacity", hp.replay_capacity}, {"rmsprop_decay", hp.rmsprop_decay},
          {"rmsprop_eps", hp.rmsprop_eps},     {"update_period", hp.update_period}};
}

template <typename V>
void take(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::runtime_error("config: " + where + " must be an object");
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw std::runtime_error("config: unknown key '" + where + item.key() + "'");
  }
}

}  // namespace

std::string config_to_text(const RunConfig& c) {
  json j;
  j["variant"] = std::string(to_string(c.variant));
  j["env"] = std::string(to_string(c.env));
  j["embed_kernel"] = c.embed_kernel;
  j["train_sizes"] = c.train_sizes;
  j["eval_sizes"] = c.eval_sizes;
  j["episodes"] = c.episodes;
  j["seed"] = c.seed;
  j["hyperparams"] = hp_to_json(c.hp);
  j["curriculum"] = c.curriculum;
  j["curriculum_schedule"] = {{"increment", c.schedule.increment},
                              {"initial", c.schedule.initial},
                              {"period", c.schedule.period}};
  j["checkpoint_every"] = c.checkpoint_every;
  j["wall_clock"] = c.wall_clock;
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

RunConfig config_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  reject_unknown(j,
                 {"variant", "env", "embed_kernel", "train_sizes", "eval_sizes", "episodes", "seed", "hyperparams", "curriculum",
                  "curriculum_schedule", "checkpoint_every", "wall_clock", "output_dir"},
                 "");
  RunConfig c;
  try {
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("env")) c.env = env_kind_from_string(j.at("env").get<std::string>());
    take(j, "embed_kernel", c.embed_kernel);
    take(j, "train_sizes", c.train_sizes);
    take(j, "eval_sizes", c.eval_sizes);
    take(j, "episodes", c.episodes);
    take(j, "seed", c.seed);
    take(j, "curriculum", c.curriculum);
    take(j, "checkpoint_every", c.checkpoint_every);
    take(j, "wall_clock", c.wall_clock);
    take(j, "output_dir", c.output_dir);
    if (j.contains("hyperparams")) {
      const auto& h = j.at("hyperparams");
      reject_unknown(h,
                     {"batch_size", "critic_lr", "gamma", "importance_cap", "policy_lr", "regularizer",
                      "replay_capacity", "rmsprop_decay", "rmsprop_eps", "update_period"},
                     "hyperparams.");
      take(h, "batch_size", c.hp.batch_size);
      take(h, "critic_lr", c.hp.critic_lr);
      take(h, "gamma", c.hp.gamma);
      take(h, "importance_cap", c.hp.importance_cap);
      take(h, "policy_lr", c.hp.policy_lr);
      take(h, "regularizer", c.hp.regularizer);
      take(h, "replay_capacity", c.hp.replay_capacity);
      take(h, "rmsprop_decay", c.hp.rmsprop_decay);
      take(h, "rmsprop_eps", c.hp.rmsprop_eps);
      take(h, "update_period", c.hp.update_period);
    }
    if (j.contains("curriculum_schedule")) {
      const auto& s = j.at("curriculum_schedule");
      reject_unknown(s, {"increment", "initial", "period"}, "curriculum_schedule.");
      take(s, "increment", c.schedule.increment);
      take(s, "initial", c.schedule.initial);
      take(s, "period", c.schedule.period);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  return c;
}

void write_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << config_to_text(config);
  if (!out) throw std::runtime_error("failed writing config file: " + path);
}

RunConfig read_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_text(buf.str());
}

TrainerConfig trainer_config(const RunConfig& c) {
  TrainerConfig t;
  t.planner.variant = c.variant;
  // Moving entities can only be anticipated from neighbouring cells.
  t.planner.embed_kernel = c.embed_kernel != 0 || c.env == EnvKind::Static ? c.embed_kernel : 3;
  t.env = c.env;
  t.train_sizes = c.train_sizes;
  t.episodes = c.episodes;
  t.seed = c.seed;
  t.hp = c.hp;
  t.curriculum = c.curriculum;
  t.schedule = c.schedule;
  t.checkpoint_every = c.checkpoint_every;
  t.wall_clock = c.wall_clock;
  return t;
}

}  // namespace vprop
