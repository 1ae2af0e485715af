#pragma once

// VIN, VProp and MVProp planners: an embedding of the observation into
// per-cell fields, a depth-K recurrence with weights shared across steps,
// and policy/value readouts at the agent cell.
//
// All functions are templated on the scalar type so the same code runs in
// float for training and in double for gradient checking.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vprop/envworld.hpp"
#include "vprop/grid.hpp"
#include "vprop/tensor.hpp"

namespace vprop {

enum class Variant { Vin, VProp, MVProp };

std::string_view to_string(Variant variant);
Variant variant_from_string(std::string_view name);

struct PlannerConfig {
  Variant variant = Variant::MVProp;
  int hidden_channels = 8;
  int d_rew = 1;  // VIN reward planes
  int input_channels = kObservationChannels;
  int embed_kernel = 0;  // first Φ conv size; 0 picks 1 (VProp, MVProp) or 3 (VIN)

  int embed_kernel_size() const;

  /// Number of per-cell fields Φ emits: 2 (MVProp), 3 (VProp), d_rew (VIN).
  int field_count() const;
  int value_input_width() const { return kActionCount + 9 * input_channels; }
  friend bool operator==(const PlannerConfig&, const PlannerConfig&) = default;
};

/// Logit offset for neighbours that fall outside the map.
inline constexpr double kOutOfBoundsLogitOffset = -10.0;

/// Recurrence depth for a rows x cols map.
int choose_depth(int rows, int cols);

template <typename T>
struct PlannerParams {
  // Φ: k x k conv to hidden channels, ReLU, 1x1 conv to the fields.
  BasicArray<T> embed_w1, embed_b1, embed_w2, embed_b2;
  // VIN transition kernels applied to v and to r̄.
  BasicArray<T> vin_pv, vin_pr;
  // VProp/MVProp logits: exp(log_scale) * neighbour value + bias.
  BasicArray<T> policy_log_scale, policy_bias;
  // Value head over [policy features ‖ 3x3 observation patch].
  BasicArray<T> value_w, value_b;

  /// Every learnable array with its checkpoint name, in a fixed order.
  std::vector<std::pair<std::string, BasicArray<T>*>> named();
  std::vector<BasicArray<T>> list() const;

  template <typename U>
  PlannerParams<U> cast() const;
  PlannerParams clone() const { return cast<T>(); }
};

template <typename T>
PlannerParams<T> init_params(const PlannerConfig& config, std::uint64_t seed);

/// Observations stacked into a [B, d_pix, H, W] constant array. All
/// observations must share one map size.
template <typename T>
BasicArray<T> stack_observations(std::span<const GridObservation* const> batch);

/// 3x3 observation patches around each agent, zero-padded: [B, 9*d_pix].
template <typename T>
BasicArray<T> agent_patches(std::span<const GridObservation* const> batch);

template <typename T>
struct Fields {
  BasicArray<T> reward;      // r̄ (MVProp), r̄in (VProp): [B,H,W]; VIN r̄: [B,d_rew,H,W]
  BasicArray<T> reward_out;  // r̄out (VProp only)
  BasicArray<T> propagation; // p (VProp, MVProp)
};

template <typename T>
Fields<T> embed(const BasicArray<T>& obs, const PlannerParams<T>& params, const PlannerConfig& config);

template <typename T>
struct ValueMap {
  BasicArray<T> v;  // [B,H,W] (or [H,W] for unbatched fields)
  BasicArray<T> q;  // [B,A,H,W], VIN only
};

/// v^0 = r̄; v^k = max(v^{k-1}, max_nb p v^{k-1}_nb + r̄ (1 - p)).
template <typename T>
ValueMap<T> mvprop_rollout(const Fields<T>& fields, int depth);

/// v^0 = 0; v^k = max(v^{k-1}, max_nb p v^{k-1}_nb + r̄in_nb - r̄out).
template <typename T>
ValueMap<T> vprop_rollout(const Fields<T>& fields, int depth);

/// q^k = conv(v^{k-1}; p_v) + conv(r̄; p_r), v^k = max_a q^k, v^0 = 0.
template <typename T>
ValueMap<T> vin_rollout(const BasicArray<T>& reward, const BasicArray<T>& pv, const BasicArray<T>& pr,
                        int depth);

/// Per-sample policy inputs: the 8 neighbour values of v^K (VProp/MVProp)
/// or q^K at the agent (VIN). Shape [B,8].
template <typename T>
BasicArray<T> policy_features(const ValueMap<T>& values, std::span<const Cell> agents, Variant variant);

/// Logits [B,8]. VIN uses the features directly; VProp/MVProp apply the
/// positive-scale affine map and the out-of-bounds offset.
template <typename T>
BasicArray<T> policy_logits(const BasicArray<T>& features, std::span<const Cell> agents, int rows,
                            int cols, const PlannerParams<T>& params, Variant variant);

/// V_w(s) for each sample: [B,1].
template <typename T>
BasicArray<T> state_value(const BasicArray<T>& features, const BasicArray<T>& patches,
                          const PlannerParams<T>& params);

/// Index of the largest logit, lowest index on ties.
int greedy_action(std::span<const float> logits);
int greedy_action(std::span<const double> logits);

template <typename T>
struct PlannerOutput {
  ValueMap<T> values;
  BasicArray<T> features;
  BasicArray<T> logits;       // [B,8]
  BasicArray<T> state_value;  // [B,1]
};

/// Full forward pass on a batch of same-size observations at depth `depth`.
template <typename T>
PlannerOutput<T> forward(const PlannerConfig& config, const PlannerParams<T>& params,
                         std::span<const GridObservation* const> batch, int depth,
                         bool with_value = true);

/// Value map only (agent-independent), for one observation.
template <typename T>
ValueMap<T> plan(const PlannerConfig& config, const PlannerParams<T>& params, const GridObservation& obs,
                 int depth);

/// Policy readout from a precomputed value map, for one agent position.
template <typename T>
BasicArray<T> readout_logits(const PlannerConfig& config, const PlannerParams<T>& params,
                             const ValueMap<T>& values, Cell agent, int rows, int cols);

}  // namespace vprop
