#pragma once

// Off-policy actor-critic training with experience replay, capped
// importance weights and a regularizer toward the behaviour policy.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vprop/envworld.hpp"
#include "vprop/planners.hpp"
#include "vprop/tensor.hpp"

namespace vprop {

struct Hyperparams {
  double gamma = 0.99;
  double importance_cap = 10.0;  // C
  double policy_lr = 0.001;      // η
  double critic_lr = 0.00001;    // η′ = η / 100
  double regularizer = 0.001;    // λ = η
  int batch_size = 128;
  int replay_capacity = 50000;
  int update_period = 32;  // environment steps between updates
  double rmsprop_decay = 0.99;
  double rmsprop_eps = 1e-8;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

using ActionProbs = std::array<float, kActionCount>;

struct Transition {
  GridObservation state;
  int action = 0;
  float reward = 0.0f;
  ActionProbs probs{};  // behaviour policy at collection time
  std::optional<GridObservation> next;  // absent iff terminal
  bool terminal = false;
};

/// Ring buffer over the most recent `capacity` transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  /// Uniform with replacement over current contents.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;
  /// Oldest-first view, for tests.
  const Transition& at_age(std::size_t age) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t next_ = 0;
  std::uint64_t inserted_ = 0;
};

/// Acts with a parameter snapshot. On worlds without moving entities the
/// value map only depends on the map, so it is computed once per episode.
class PolicyRunner {
 public:
  PolicyRunner(PlannerConfig config, const PlannerParams<float>& params)
      : config_(config), params_(&params) {}

  /// Softmax of the logits at the agent cell.
  ActionProbs probabilities(const GridWorld& world);
  std::array<float, kActionCount> logits(const GridWorld& world);
  int greedy(const GridWorld& world);
  /// Drop the cached value map (new episode or new parameters).
  void invalidate() { cache_valid_ = false; }
  const ValueMap<float>& value_map(const GridWorld& world);

 private:
  PlannerConfig config_;
  const PlannerParams<float>* params_;
  ValueMap<float> cache_;
  Cell cached_goal_;
  WallGrid cached_obstacles_;
  bool cache_valid_ = false;
};

/// Samples a ~ π(·|s), steps the world and appends the transition.
Transition collect_step(GridWorld& world, PolicyRunner& policy, Rng& rng, ReplayBuffer& buffer);

struct UpdateStats {
  double loss = 0.0;
  double mean_importance = 0.0;
  double max_importance = 0.0;
  std::size_t batch = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-sample quantities entering the update; exposed for tests.
struct UpdateTerms {
  double importance = 0.0;  // min(π(a|s)/p(a), C)
  double target = 0.0;      // r + 1[s' non-terminal] γ V(s')
  double advantage = 0.0;   // target - V(s)
};

double capped_importance(double pi, double behaviour, double cap);

/// The scalar surrogate behind update(), differentiable w.r.t. `params`.
template <typename T>
BasicArray<T> update_loss(std::span<const Transition* const> batch, const PlannerParams<T>& params,
                          const PlannerConfig& config, const Hyperparams& hp,
                          std::vector<UpdateTerms>* terms = nullptr);

/// One gradient step on a batch. Minimises
///   -Σ ρ·Â·log π(a|s) - (λ/η) Σ Σ_a' p(a') log π(a'|s) + (η′/η) Σ ρ (V(s) - y)^2 / 2
/// averaged over the batch, with ρ, Â and y held constant, so that one
/// RMSProp step at rate η realises the three update rules with their
/// relative weights. Throws TrainingDiverged on non-finite parameters.
UpdateStats update(std::span<const Transition* const> batch, PlannerParams<float>& params,
                   RmsProp<float>& optimizer, const PlannerConfig& config, const Hyperparams& hp,
                   std::vector<UpdateTerms>* terms = nullptr);

struct TrainerConfig {
  PlannerConfig planner;
  EnvKind env = EnvKind::Static;
  std::vector<int> train_sizes{8};
  int episodes = 1000;
  std::uint64_t seed = 1;
  Hyperparams hp;
  bool curriculum = true;
  CurriculumSchedule schedule;
  /// When set, every episode restarts from this world instead of generating.
  std::optional<GridWorld> fixed_map;
  /// Callback cadence for periodic evaluation/checkpointing (0 = never).
  int checkpoint_every = 0;
  /// Write wall-clock seconds into metrics; off gives reproducible files.
  bool wall_clock = true;
};

struct EpisodeMetrics {
  int episode = 0;
  int steps = 0;
  double reward = 0.0;
  bool win = false;
  int curriculum_bound = 0;
  double wall_clock_s = 0.0;
};

struct TrainCallbacks {
  std::function<void(const EpisodeMetrics&)> on_episode;
  std::function<void(int episode, const PlannerParams<float>&)> on_checkpoint;
};

struct TrainSummary {
  int episodes = 0;
  std::uint64_t env_steps = 0;
  std::uint64_t updates = 0;
  int final_curriculum_bound = 0;
};

/// Runs the collect/update loop, mutating `params` in place.
TrainSummary train(const TrainerConfig& config, PlannerParams<float>& params,
                   const TrainCallbacks& callbacks = {});

/// Metrics CSV helpers: header and one formatted row.
std::string metrics_header();
std::string metrics_row(const EpisodeMetrics& m);

}  // namespace vprop
