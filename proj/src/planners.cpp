#include "vprop/planners.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vprop {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::Vin: return "vin";
    case Variant::VProp: return "vprop";
    case Variant::MVProp: return "mvprop";
  }
  return "unknown";
}

Variant variant_from_string(std::string_view name) {
  for (auto v : {Variant::Vin, Variant::VProp, Variant::MVProp}) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown planner variant '" + std::string(name) + "'");
}

int PlannerConfig::field_count() const {
  switch (variant) {
    case Variant::Vin: return d_rew;
    case Variant::VProp: return 3;
    case Variant::MVProp: return 2;
  }
  return 0;
}

int PlannerConfig::embed_kernel_size() const {
  if (embed_kernel == 0) return variant == Variant::Vin ? 3 : 1;
  if (embed_kernel != 1 && embed_kernel != 3) {
    throw std::invalid_argument("embed_kernel must be 0, 1 or 3, got " + std::to_string(embed_kernel));
  }
  return embed_kernel;
}

int choose_depth(int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("choose_depth: non-positive map size");
  return rows + cols;
}

template <typename T>
std::vector<std::pair<std::string, BasicArray<T>*>> PlannerParams<T>::named() {
  std::vector<std::pair<std::string, BasicArray<T>*>> out{
      {"embed.conv1.weight", &embed_w1}, {"embed.conv1.bias", &embed_b1},
      {"embed.conv2.weight", &embed_w2}, {"embed.conv2.bias", &embed_b2},
      {"vin.p_v", &vin_pv},              {"vin.p_r", &vin_pr},
      {"policy.log_scale", &policy_log_scale}, {"policy.bias", &policy_bias},
      {"value.weight", &value_w},        {"value.bias", &value_b},
  };
  std::erase_if(out, [](const auto& entry) { return !entry.second->valid(); });
  return out;
}

template <typename T>
std::vector<BasicArray<T>> PlannerParams<T>::list() const {
  auto self = const_cast<PlannerParams*>(this);
  std::vector<BasicArray<T>> out;
  for (auto& [name, array] : self->named()) out.push_back(*array);
  return out;
}

template <typename T>
template <typename U>
PlannerParams<U> PlannerParams<T>::cast() const {
  auto copy = [](const BasicArray<T>& a) {
    return a.valid() ? a.template cast<U>(a.requires_grad()) : BasicArray<U>{};
  };
  PlannerParams<U> out;
  out.embed_w1 = copy(embed_w1);
  out.embed_b1 = copy(embed_b1);
  out.embed_w2 = copy(embed_w2);
  out.embed_b2 = copy(embed_b2);
  out.vin_pv = copy(vin_pv);
  out.vin_pr = copy(vin_pr);
  out.policy_log_scale = copy(policy_log_scale);
  out.policy_bias = copy(policy_bias);
  out.value_w = copy(value_w);
  out.value_b = copy(value_b);
  return out;
}

template <typename T>
PlannerParams<T> init_params(const PlannerConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](Shape shape, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> values(static_cast<std::size_t>(numel(shape)));
    for (auto& v : values) v = static_cast<T>(dist(rng));
    return BasicArray<T>::from(std::move(shape), std::move(values), true);
  };
  const int h = config.hidden_channels, c = config.input_channels, f = config.field_count();
  PlannerParams<T> p;
  const int k = config.embed_kernel_size();
  p.embed_w1 = uniform({h, c, k, k}, 1.0 / std::sqrt(static_cast<double>(k * k * c)));
  p.embed_b1 = BasicArray<T>::full({h}, T(0.1), true);
  p.embed_w2 = uniform({f, h, 1, 1}, 1.0 / std::sqrt(static_cast<double>(h)));
  p.embed_b2 = BasicArray<T>::zeros({f}, true);
  if (config.variant != Variant::Vin) {
    // Start with long-range propagation and small rewards: p = sigmoid(4), r = sigmoid(-3).
    auto bias = p.embed_b2.mutable_values();
    for (int k = 0; k + 1 < f; ++k) bias[k] = T(-3);
    bias[f - 1] = T(4);
  }
  if (config.variant == Variant::Vin) {
    p.vin_pv = uniform({kActionCount, 1, 3, 3}, 0.05);
    p.vin_pr = uniform({kActionCount, config.d_rew, 3, 3}, 0.05);
  } else {
    p.policy_log_scale = BasicArray<T>::scalar(T(6), true);
    p.policy_bias = BasicArray<T>::scalar(T(0), true);
  }
  p.value_w = BasicArray<T>::zeros({1, config.value_input_width()}, true);
  p.value_b = BasicArray<T>::zeros({1}, true);
  return p;
}

template <typename T>
BasicArray<T> stack_observations(std::span<const GridObservation* const> batch) {
  if (batch.empty()) throw std::invalid_argument("stack_observations: empty batch");
  const int rows = batch[0]->rows, cols = batch[0]->cols;
  const auto per = batch[0]->planes.size();
  std::vector<T> values;
  values.reserve(per * batch.size());
  for (const auto* obs : batch) {
    if (obs->rows != rows || obs->cols != cols) {
      throw std::invalid_argument("stack_observations: mixed map sizes in one batch");
    }
    values.insert(values.end(), obs->planes.begin(), obs->planes.end());
  }
  const int channels = static_cast<int>(per / (static_cast<std::size_t>(rows) * cols));
  return BasicArray<T>::from({static_cast<int>(batch.size()), channels, rows, cols}, std::move(values));
}

template <typename T>
BasicArray<T> agent_patches(std::span<const GridObservation* const> batch) {
  if (batch.empty()) throw std::invalid_argument("agent_patches: empty batch");
  const int channels = static_cast<int>(batch[0]->planes.size() /
                                        (static_cast<std::size_t>(batch[0]->rows) * batch[0]->cols));
  std::vector<T> values;
  values.reserve(batch.size() * 9 * channels);
  for (const auto* obs : batch) {
    for (int ch = 0; ch < channels; ++ch) {
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int r = obs->agent.row + dr, c = obs->agent.col + dc;
          const bool inside = r >= 0 && r < obs->rows && c >= 0 && c < obs->cols;
          values.push_back(inside ? T(obs->at(ch, r, c)) : T(0));
        }
      }
    }
  }
  return BasicArray<T>::from({static_cast<int>(batch.size()), 9 * channels}, std::move(values));
}

namespace {

// Channel `c` of a [B,F,H,W] array as [B,H,W].
template <typename T>
BasicArray<T> take_channel(const BasicArray<T>& x, int c) {
  const int b = x.dim(0), f = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  std::vector<std::int64_t> index(static_cast<std::size_t>(b * plane));
  for (int n = 0; n < b; ++n) {
    for (std::int64_t k = 0; k < plane; ++k) index[n * plane + k] = (static_cast<std::int64_t>(n) * f + c) * plane + k;
  }
  return gather(x, std::move(index), {b, h, w});
}

}  // namespace

template <typename T>
Fields<T> embed(const BasicArray<T>& obs, const PlannerParams<T>& params, const PlannerConfig& config) {
  if (obs.ndim() != 4) throw std::invalid_argument("embed: observation must be [B,C,H,W], got " + shape_str(obs.shape()));
  if (obs.dim(1) != config.input_channels) {
    throw std::invalid_argument("embed: observation has " + std::to_string(obs.dim(1)) +
                                " channels, planner expects " + std::to_string(config.input_channels));
  }
  const int fields = config.field_count();
  const int k = config.embed_kernel_size();
  auto hidden = relu(conv2d(obs, ConvSpec{config.input_channels, config.hidden_channels, k, k, k / 2},
                            params.embed_w1, params.embed_b1));
  auto raw = conv2d(hidden, ConvSpec{config.hidden_channels, fields, 1, 1, 0}, params.embed_w2, params.embed_b2);
  Fields<T> out;
  switch (config.variant) {
    case Variant::Vin:
      out.reward = raw;
      break;
    case Variant::VProp: {
      auto squashed = sigmoid(raw);
      out.reward = take_channel(squashed, 0);
      out.reward_out = take_channel(squashed, 1);
      out.propagation = take_channel(squashed, 2);
      break;
    }
    case Variant::MVProp: {
      auto squashed = sigmoid(raw);
      out.reward = take_channel(squashed, 0);
      out.propagation = take_channel(squashed, 1);
      break;
    }
  }
  return out;
}

template <typename T>
ValueMap<T> mvprop_rollout(const Fields<T>& fields, int depth) {
  const auto& r = fields.reward;
  const auto& p = fields.propagation;
  detail::require_same_shape("mvprop_rollout", r, p);
  // r̄ + p (v - r̄) == p v + r̄ (1 - p); an off-grid neighbour contributes r̄ (1 - p).
  const auto base = sub(r, mul(r, p));
  auto v = r;
  for (int k = 0; k < depth; ++k) v = propagate_step(v, p, base, BasicArray<T>{}, true);
  return {v, {}};
}

template <typename T>
ValueMap<T> vprop_rollout(const Fields<T>& fields, int depth) {
  const auto& p = fields.propagation;
  detail::require_same_shape("vprop_rollout", fields.reward, p);
  detail::require_same_shape("vprop_rollout", fields.reward_out, p);
  const auto neg_out = affine(fields.reward_out, T(-1), T(0));
  auto v = BasicArray<T>::zeros(p.shape());
  for (int k = 0; k < depth; ++k) v = propagate_step(v, p, neg_out, fields.reward, false);
  return {v, {}};
}

template <typename T>
ValueMap<T> vin_rollout(const BasicArray<T>& reward, const BasicArray<T>& pv, const BasicArray<T>& pr,
                        int depth) {
  const bool batched = reward.ndim() == 4;
  const int b = batched ? reward.dim(0) : 1;
  const int d_rew = reward.dim(-3), h = reward.dim(-2), w = reward.dim(-1);
  const auto r4 = batched ? reward : reshape(reward, {1, d_rew, h, w});
  const auto from_reward = conv2d(r4, ConvSpec{d_rew, kActionCount, 3, 3, 1}, pr, BasicArray<T>{});
  auto v = BasicArray<T>::zeros({b, 1, h, w});
  BasicArray<T> q;
  for (int k = 0; k < depth; ++k) {
    q = add(conv2d(v, ConvSpec{1, kActionCount, 3, 3, 1}, pv, BasicArray<T>{}), from_reward);
    v = reshape(channel_max(q), {b, 1, h, w});
  }
  if (depth == 0) q = BasicArray<T>::zeros({b, kActionCount, h, w});
  if (!batched) return {reshape(v, {h, w}), reshape(q, {kActionCount, h, w})};
  return {reshape(v, {b, h, w}), q};
}

template <typename T>
BasicArray<T> policy_features(const ValueMap<T>& values, std::span<const Cell> agents, Variant variant) {
  const auto& v = values.v;
  const int h = v.dim(-2), w = v.dim(-1);
  const int b = v.ndim() == 3 ? v.dim(0) : 1;
  if (static_cast<int>(agents.size()) != b) {
    throw std::invalid_argument("policy_features: " + std::to_string(agents.size()) + " agents for batch of " +
                                std::to_string(b));
  }
  std::vector<std::int64_t> index;
  index.reserve(static_cast<std::size_t>(b) * kActionCount);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int n = 0; n < b; ++n) {
    const Cell agent = agents[n];
    if (agent.row < 0 || agent.row >= h || agent.col < 0 || agent.col >= w) {
      throw std::invalid_argument("policy_features: agent outside the map");
    }
    for (int a = 0; a < kActionCount; ++a) {
      if (variant == Variant::Vin) {
        index.push_back((static_cast<std::int64_t>(n) * kActionCount + a) * plane +
                        static_cast<std::int64_t>(agent.row) * w + agent.col);
      } else {
        const Cell nb = step_toward(agent, a);
        const bool inside = nb.row >= 0 && nb.row < h && nb.col >= 0 && nb.col < w;
        index.push_back(inside ? n * plane + static_cast<std::int64_t>(nb.row) * w + nb.col : -1);
      }
    }
  }
  const auto& source = variant == Variant::Vin ? values.q : v;
  return gather(source, std::move(index), {b, kActionCount});
}

template <typename T>
BasicArray<T> policy_logits(const BasicArray<T>& features, std::span<const Cell> agents, int rows,
                            int cols, const PlannerParams<T>& params, Variant variant) {
  if (variant == Variant::Vin) return features;
  auto logits = shift_by(scale_by(features, exp(params.policy_log_scale)), params.policy_bias);
  std::vector<T> offsets(features.size(), T(0));
  bool any = false;
  for (std::size_t n = 0; n < agents.size(); ++n) {
    for (int a = 0; a < kActionCount; ++a) {
      const Cell nb = step_toward(agents[n], a);
      if (nb.row < 0 || nb.row >= rows || nb.col < 0 || nb.col >= cols) {
        offsets[n * kActionCount + a] = static_cast<T>(kOutOfBoundsLogitOffset);
        any = true;
      }
    }
  }
  if (!any) return logits;
  return add(logits, BasicArray<T>::from(features.shape(), std::move(offsets)));
}

template <typename T>
BasicArray<T> state_value(const BasicArray<T>& features, const BasicArray<T>& patches,
                          const PlannerParams<T>& params) {
  return linear(concat_last(features, patches), params.value_w, params.value_b);
}

namespace {
template <typename T>
int argmax_lowest(std::span<const T> logits) {
  int best = 0;
  T best_value = -std::numeric_limits<T>::infinity();
  for (int a = 0; a < static_cast<int>(logits.size()); ++a) {
    const T v = std::isnan(logits[a]) ? -std::numeric_limits<T>::infinity() : logits[a];
    if (v > best_value) {
      best_value = v;
      best = a;
    }
  }
  return best;
}
}  // namespace

int greedy_action(std::span<const float> logits) { return argmax_lowest(logits); }
int greedy_action(std::span<const double> logits) { return argmax_lowest(logits); }

template <typename T>
ValueMap<T> rollout(const PlannerConfig& config, const PlannerParams<T>& params, const Fields<T>& fields,
                    int depth) {
  switch (config.variant) {
    case Variant::Vin: return vin_rollout(fields.reward, params.vin_pv, params.vin_pr, depth);
    case Variant::VProp: return vprop_rollout(fields, depth);
    case Variant::MVProp: return mvprop_rollout(fields, depth);
  }
  throw std::logic_error("rollout: bad variant");
}

template <typename T>
PlannerOutput<T> forward(const PlannerConfig& config, const PlannerParams<T>& params,
                         std::span<const GridObservation* const> batch, int depth, bool with_value) {
  const auto obs = stack_observations<T>(batch);
  PlannerOutput<T> out;
  out.values = rollout(config, params, embed(obs, params, config), depth);
  std::vector<Cell> agents;
  agents.reserve(batch.size());
  for (const auto* o : batch) agents.push_back(o->agent);
  out.features = policy_features(out.values, agents, config.variant);
  out.logits = policy_logits(out.features, agents, batch[0]->rows, batch[0]->cols, params, config.variant);
  if (with_value) out.state_value = state_value(out.features, agent_patches<T>(batch), params);
  return out;
}

template <typename T>
ValueMap<T> plan(const PlannerConfig& config, const PlannerParams<T>& params, const GridObservation& obs,
                 int depth) {
  const GridObservation* batch[] = {&obs};
  return rollout(config, params, embed(stack_observations<T>(batch), params, config), depth);
}

template <typename T>
BasicArray<T> readout_logits(const PlannerConfig& config, const PlannerParams<T>& params,
                             const ValueMap<T>& values, Cell agent, int rows, int cols) {
  const Cell agents[] = {agent};
  return policy_logits(policy_features(values, agents, config.variant), agents, rows, cols, params,
                       config.variant);
}

#define VPROP_INSTANTIATE(T)                                                                         \
  template struct PlannerParams<T>;                                                                  \
  template PlannerParams<float> PlannerParams<T>::cast<float>() const;                               \
  template PlannerParams<double> PlannerParams<T>::cast<double>() const;                             \
  template PlannerParams<T> init_params<T>(const PlannerConfig&, std::uint64_t);                     \
  template BasicArray<T> stack_observations<T>(std::span<const GridObservation* const>);             \
  template BasicArray<T> agent_patches<T>(std::span<const GridObservation* const>);                  \
  template Fields<T> embed<T>(const BasicArray<T>&, const PlannerParams<T>&, const PlannerConfig&);  \
  template ValueMap<T> mvprop_rollout<T>(const Fields<T>&, int);                                     \
  template ValueMap<T> vprop_rollout<T>(const Fields<T>&, int);                                      \
  template ValueMap<T> vin_rollout<T>(const BasicArray<T>&, const BasicArray<T>&, const BasicArray<T>&, int); \
  template BasicArray<T> policy_features<T>(const ValueMap<T>&, std::span<const Cell>, Variant);     \
  template BasicArray<T> policy_logits<T>(const BasicArray<T>&, std::span<const Cell>, int, int,     \
                                          const PlannerParams<T>&, Variant);                         \
  template BasicArray<T> state_value<T>(const BasicArray<T>&, const BasicArray<T>&, const PlannerParams<T>&); \
  template PlannerOutput<T> forward<T>(const PlannerConfig&, const PlannerParams<T>&,                \
                                       std::span<const GridObservation* const>, int, bool);          \
  template ValueMap<T> plan<T>(const PlannerConfig&, const PlannerParams<T>&, const GridObservation&, int); \
  template BasicArray<T> readout_logits<T>(const PlannerConfig&, const PlannerParams<T>&,            \
                                           const ValueMap<T>&, Cell, int, int);

VPROP_INSTANTIATE(float)
VPROP_INSTANTIATE(double)

#undef VPROP_INSTANTIATE

}  // namespace vprop
