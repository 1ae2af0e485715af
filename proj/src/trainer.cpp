#include "vprop/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace vprop {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 4096));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
  ++inserted_;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<const Transition*> out;
  if (items_.empty()) return out;
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(&items_[pick(rng)]);
  return out;
}

const Transition& ReplayBuffer::at_age(std::size_t age) const {
  if (age >= items_.size()) throw std::out_of_range("replay buffer: age out of range");
  const std::size_t oldest = items_.size() < capacity_ ? 0 : next_;
  return items_[(oldest + age) % items_.size()];
}

const ValueMap<float>& PolicyRunner::value_map(const GridWorld& world) {
  if (world.has_moving_entities() || !cache_valid_ || !(cached_goal_ == world.goal) ||
      !(cached_obstacles_ == world.static_obstacles())) {
    NoGradScope no_grad;
    cache_ = plan(config_, *params_, observe(world), choose_depth(world.rows(), world.cols()));
    cached_goal_ = world.goal;
    cached_obstacles_ = world.static_obstacles();
    cache_valid_ = true;
  }
  return cache_;
}

std::array<float, kActionCount> PolicyRunner::logits(const GridWorld& world) {
  NoGradScope no_grad;
  const auto& values = value_map(world);
  const auto out = readout_logits(config_, *params_, values, world.agent, world.rows(), world.cols());
  std::array<float, kActionCount> logits{};
  std::copy(out.values().begin(), out.values().end(), logits.begin());
  return logits;
}

ActionProbs PolicyRunner::probabilities(const GridWorld& world) {
  NoGradScope no_grad;
  const auto logits_arr = logits(world);
  const auto logp = softmax_logp(Array::from({kActionCount}, {logits_arr.begin(), logits_arr.end()}));
  ActionProbs probs{};
  for (int a = 0; a < kActionCount; ++a) probs[a] = std::exp(logp[a]);
  return probs;
}

int PolicyRunner::greedy(const GridWorld& world) {
  const auto l = logits(world);
  return greedy_action(std::span<const float>(l));
}

Transition collect_step(GridWorld& world, PolicyRunner& policy, Rng& rng, ReplayBuffer& buffer) {
  Transition t;
  t.state = observe(world);
  t.probs = policy.probabilities(world);
  std::discrete_distribution<int> choose(t.probs.begin(), t.probs.end());
  t.action = choose(rng);
  const StepResult result = step(world, t.action, rng);
  t.reward = static_cast<float>(result.reward);
  t.terminal = result.terminal;
  if (!result.terminal) t.next = observe(world);
  buffer.push(t);
  return t;
}

double capped_importance(double pi, double behaviour, double cap) {
  if (behaviour <= 0) throw std::invalid_argument("capped_importance: behaviour probability must be positive");
  return std::min(pi / behaviour, cap);
}

namespace {

bool all_finite(const PlannerParams<float>& params) {
  for (const auto& p : params.list()) {
    for (float v : p.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::string describe_batch(std::span<const Transition* const> batch) {
  std::ostringstream out;
  out << "offending batch (" << batch.size() << " transitions):\n";
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = *batch[i];
    out << "  [" << i << "] map " << t.state.rows << "x" << t.state.cols << " agent (" << t.state.agent.row
        << "," << t.state.agent.col << ") action " << t.action << " reward " << t.reward
        << (t.terminal ? " terminal" : "") << " p(a)=" << t.probs[t.action] << "\n";
  }
  return out.str();
}

}  // namespace

template <typename T>
BasicArray<T> update_loss(std::span<const Transition* const> batch, const PlannerParams<T>& params,
                          const PlannerConfig& config, const Hyperparams& hp, std::vector<UpdateTerms>* terms) {
  if (batch.empty()) throw std::invalid_argument("update_loss: empty batch");
  if (terms) terms->assign(batch.size(), {});

  // Observations of different sizes cannot share a tensor; group by size.
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    groups[{batch[i]->state.rows, batch[i]->state.cols}].push_back(i);
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double reg_weight = hp.regularizer / hp.policy_lr;
  const double critic_weight = hp.critic_lr / hp.policy_lr;

  BasicArray<T> total;
  for (const auto& [dims, members] : groups) {
    const int depth = choose_depth(dims.first, dims.second);
    std::vector<const GridObservation*> states;
    std::vector<const GridObservation*> nexts;
    for (auto i : members) {
      states.push_back(&batch[i]->state);
      if (batch[i]->next) nexts.push_back(&*batch[i]->next);
    }
    const auto out = forward(config, params, states, depth, true);
    const auto logp = softmax_logp(out.logits);

    std::vector<T> next_values;
    if (!nexts.empty()) {
      NoGradScope no_grad;
      const auto next_out = forward(config, params, nexts, depth, true);
      next_values.assign(next_out.state_value.values().begin(), next_out.state_value.values().end());
    }

    const std::size_t n = members.size();
    std::vector<T> policy_coeff(n * kActionCount, T(0));
    std::vector<T> critic_coeff(n, T(0));
    std::vector<T> targets(n, T(0));
    std::size_t next_index = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const Transition& t = *batch[members[k]];
      const double pi = std::exp(static_cast<double>(logp[k * kActionCount + t.action]));
      const double rho = capped_importance(pi, t.probs[t.action], hp.importance_cap);
      const double bootstrap = t.next ? hp.gamma * static_cast<double>(next_values[next_index++]) : 0.0;
      const double target = t.reward + bootstrap;
      const double advantage = target - static_cast<double>(out.state_value[k]);
      policy_coeff[k * kActionCount + t.action] += static_cast<T>(-rho * advantage * inv_b);
      for (int a = 0; a < kActionCount; ++a) {
        policy_coeff[k * kActionCount + a] += static_cast<T>(-reg_weight * t.probs[a] * inv_b);
      }
      critic_coeff[k] = static_cast<T>(critic_weight * rho * 0.5 * inv_b);
      targets[k] = static_cast<T>(target);
      if (terms) (*terms)[members[k]] = {rho, target, advantage};
    }
    const auto residual = sub(out.state_value, BasicArray<T>::from({static_cast<int>(n), 1}, std::move(targets)));
    auto loss = add(dot_const(logp, std::move(policy_coeff)),
                    dot_const(mul(residual, residual), std::move(critic_coeff)));
    total = total.valid() ? add(total, loss) : loss;
  }
  return total;
}

template BasicArray<float> update_loss<float>(std::span<const Transition* const>, const PlannerParams<float>&,
                                              const PlannerConfig&, const Hyperparams&, std::vector<UpdateTerms>*);
template BasicArray<double> update_loss<double>(std::span<const Transition* const>, const PlannerParams<double>&,
                                                const PlannerConfig&, const Hyperparams&, std::vector<UpdateTerms>*);

UpdateStats update(std::span<const Transition* const> batch, PlannerParams<float>& params,
                   RmsProp<float>& optimizer, const PlannerConfig& config, const Hyperparams& hp,
                   std::vector<UpdateTerms>* terms) {
  UpdateStats stats;
  if (batch.empty()) return stats;
  stats.batch = batch.size();
  std::vector<UpdateTerms> local;
  auto* out_terms = terms ? terms : &local;
  Tape tape;
  const auto total = update_loss(batch, params, config, hp, out_terms);
  for (const auto& t : *out_terms) {
    stats.mean_importance += t.importance / static_cast<double>(batch.size());
    stats.max_importance = std::max(stats.max_importance, t.importance);
  }
  stats.loss = total.item();
  tape.backward(total);
  auto list = params.list();
  optimizer.step(list);
  if (!all_finite(params)) {
    throw TrainingDiverged("non-finite parameter after update\n" + describe_batch(batch));
  }
  return stats;
}

TrainSummary train(const TrainerConfig& config, PlannerParams<float>& params, const TrainCallbacks& callbacks) {
  if (config.train_sizes.empty() && !config.fixed_map) {
    throw std::invalid_argument("train: no training map sizes");
  }
  const auto& hp = config.hp;
  Rng rng(config.seed);
  ReplayBuffer buffer(static_cast<std::size_t>(hp.replay_capacity));
  RmsProp<float> optimizer(static_cast<float>(hp.policy_lr), static_cast<float>(hp.rmsprop_decay),
                           static_cast<float>(hp.rmsprop_eps));
  PolicyRunner policy(config.planner, params);

  int largest = 0;
  for (int s : config.train_sizes) largest = std::max(largest, s);
  if (config.fixed_map) largest = std::max(config.fixed_map->rows(), config.fixed_map->cols());
  Curriculum curriculum(config.schedule, curriculum_ceiling(largest, largest));

  const auto start = std::chrono::steady_clock::now();
  TrainSummary summary;
  std::uniform_int_distribution<std::size_t> pick_size(0, config.train_sizes.empty() ? 0 : config.train_sizes.size() - 1);

  for (int episode = 0; episode < config.episodes; ++episode) {
    GridWorld world;
    if (config.fixed_map) {
      world = *config.fixed_map;
      world.step_count = 0;
      world.outcome = Outcome::Ongoing;
    } else {
      const int size = config.train_sizes[pick_size(rng)];
      world = generate(config.env, size, size, rng);
      if (config.curriculum) {
        while (!curriculum.accepts(world)) {
          if (!resample_endpoints(world, rng, curriculum.bound())) world = generate(config.env, size, size, rng);
        }
      }
    }

    EpisodeMetrics m;
    m.episode = episode;
    m.curriculum_bound = curriculum.bound();
    while (!world.terminal()) {
      const Transition t = collect_step(world, policy, rng, buffer);
      m.reward += t.reward;
      ++m.steps;
      ++summary.env_steps;
      if (summary.env_steps % static_cast<std::uint64_t>(hp.update_period) == 0 && !buffer.empty()) {
        const auto batch = buffer.sample(static_cast<std::size_t>(hp.batch_size), rng);
        update(batch, params, optimizer, config.planner, hp);
        policy.invalidate();
        ++summary.updates;
      }
    }
    m.win = world.outcome == Outcome::Win;
    if (config.wall_clock) {
      m.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    if (config.curriculum) curriculum.episode_finished();
    if (callbacks.on_episode) callbacks.on_episode(m);
    ++summary.episodes;
    if (config.checkpoint_every > 0 && (episode + 1) % config.checkpoint_every == 0 && callbacks.on_checkpoint) {
      callbacks.on_checkpoint(episode + 1, params);
    }
  }
  summary.final_curriculum_bound = curriculum.bound();
  return summary;
}

std::string metrics_header() { return "episode,steps,reward,win,curriculum_bound,wall_clock_s"; }

std::string metrics_row(const EpisodeMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%d,%d,%.3f", m.episode, m.steps, m.reward, m.win ? 1 : 0,
                m.curriculum_bound, m.wall_clock_s);
  return buf;
}

}  // namespace vprop
