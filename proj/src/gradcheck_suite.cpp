#include "vprop/gradcheck_suite.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <stdexcept>

#include "vprop/envworld.hpp"
#include "vprop/planners.hpp"
#include "vprop/tensor.hpp"

namespace vprop {

namespace {

using D = BasicArray<double>;

struct Instance {
  std::function<D()> loss;
  std::vector<D> params;
};

struct Outcome {
  double error = 0.0;
  bool kink = false;
};

// Like grad_check, but also evaluates the difference quotient at step/4.
// Away from kinks both quotients agree to roundoff; a disagreement means
// the perturbation crossed a branch of some max and the instance is redrawn.
Outcome check_instance(const Instance& inst, double step) {
  for (auto p : inst.params) p.clear_grad();
  {
    Tape tape;
    tape.backward(inst.loss());
  }
  Outcome out;
  NoGradScope no_grad;
  for (auto p : inst.params) {
    p.ensure_grad();
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    p.clear_grad();
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto quotient = [&](double h) {
        values[i] = saved + h;
        const double up = inst.loss().item();
        values[i] = saved - h;
        const double down = inst.loss().item();
        values[i] = saved;
        return (up - down) / (2 * h);
      };
      const double coarse = quotient(step);
      const double fine = quotient(step / 4);
      if (std::abs(coarse - fine) > 1e-7 * std::max(1.0, std::abs(fine))) out.kink = true;
      out.error = std::max(out.error, relative_error(analytic[i], coarse));
    }
  }
  return out;
}

D random_array(Shape shape, std::mt19937_64& rng, double lo, double hi, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = u(rng);
  return D::from(std::move(shape), std::move(v), grad);
}

std::vector<double> random_coeffs(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> c(n);
  for (auto& x : c) x = u(rng);
  return c;
}

int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

using Factory = std::function<Instance(std::mt19937_64&)>;

Instance conv_instance(std::mt19937_64& rng) {
  const bool one_by_one = pick(rng, 0, 3) == 0;
  ConvSpec spec{pick(rng, 1, 3), pick(rng, 1, 4), one_by_one ? 1 : 3, one_by_one ? 1 : 3, one_by_one ? 0 : 1};
  const int n = pick(rng, 1, 2), h = pick(rng, 2, 5), w = pick(rng, 2, 5);
  auto x = random_array({n, spec.in_channels, h, w}, rng, -1, 1);
  auto k = random_array({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w}, rng, -1, 1);
  auto b = random_array({spec.out_channels}, rng, -1, 1);
  auto c = random_coeffs(static_cast<std::size_t>(n * spec.out_channels * h * w), rng);
  return {[=] { return dot_const(conv2d(x, spec, k, b), c); }, {x, k, b}};
}

Instance sigmoid_instance(std::mt19937_64& rng) {
  auto x = random_array({pick(rng, 1, 12)}, rng, -6, 6);
  auto c = random_coeffs(x.size(), rng);
  return {[=] { return dot_const(sigmoid(x), c); }, {x}};
}

Instance softmax_instance(std::mt19937_64& rng) {
  auto x = random_array({pick(rng, 1, 4), kActionCount}, rng, -4, 4);
  auto c = random_coeffs(x.size(), rng);
  return {[=] { return dot_const(softmax_logp(x), c); }, {x}};
}

Instance channel_max_instance(std::mt19937_64& rng) {
  auto q = random_array({pick(rng, 1, 2), kActionCount, pick(rng, 1, 4), pick(rng, 1, 4)}, rng, -1, 1);
  auto c = random_coeffs(q.size() / kActionCount, rng);
  return {[=] { return dot_const(channel_max(q), c); }, {q}};
}

Instance mvprop_instance(std::mt19937_64& rng) {
  const int h = pick(rng, 2, 5), w = pick(rng, 2, 5), depth = pick(rng, 1, h + w);
  Fields<double> f;
  f.reward = random_array({1, h, w}, rng, 0, 1);
  f.propagation = random_array({1, h, w}, rng, 0, 1);
  auto c = random_coeffs(static_cast<std::size_t>(h * w), rng);
  return {[=] { return dot_const(mvprop_rollout(f, depth).v, c); }, {f.reward, f.propagation}};
}

Instance vprop_instance(std::mt19937_64& rng) {
  const int h = pick(rng, 2, 5), w = pick(rng, 2, 5), depth = pick(rng, 1, h + w);
  Fields<double> f;
  f.reward = random_array({1, h, w}, rng, 0, 1);
  f.reward_out = random_array({1, h, w}, rng, 0, 1);
  f.propagation = random_array({1, h, w}, rng, 0, 1);
  auto c = random_coeffs(static_cast<std::size_t>(h * w), rng);
  return {[=] { return dot_const(vprop_rollout(f, depth).v, c); }, {f.reward, f.reward_out, f.propagation}};
}

Instance vin_instance(std::mt19937_64& rng) {
  const int h = pick(rng, 2, 5), w = pick(rng, 2, 5), depth = pick(rng, 1, 4);
  auto r = random_array({1, 1, h, w}, rng, -1, 1);
  auto pv = random_array({kActionCount, 1, 3, 3}, rng, -0.5, 0.5);
  auto pr = random_array({kActionCount, 1, 3, 3}, rng, -0.5, 0.5);
  auto c = random_coeffs(static_cast<std::size_t>(kActionCount * h * w), rng);
  return {[=] { return dot_const(vin_rollout(r, pv, pr, depth).q, c); }, {r, pv, pr}};
}

Instance value_head_instance(std::mt19937_64& rng) {
  PlannerConfig config;
  const int b = pick(rng, 1, 3);
  PlannerParams<double> params;
  params.value_w = random_array({1, config.value_input_width()}, rng, -0.5, 0.5);
  params.value_b = random_array({1}, rng, -0.5, 0.5);
  auto features = random_array({b, kActionCount}, rng, -1, 1);
  auto patches = random_array({b, 9 * config.input_channels}, rng, 0, 1, false);
  auto c = random_coeffs(static_cast<std::size_t>(b), rng);
  return {[=] { return dot_const(state_value(features, patches, params), c); },
          {params.value_w, params.value_b, features}};
}

Instance planner_instance(std::mt19937_64& rng) {
  PlannerConfig config;
  config.variant = static_cast<Variant>(pick(rng, 0, 2));
  auto params = init_params<double>(config, rng());
  for (auto& [name, array] : params.named()) {
    for (auto& v : array->mutable_values()) v += std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  }
  const GridWorld world = generate(EnvKind::Static, 6, 6, static_cast<std::uint64_t>(rng()));
  auto obs = std::make_shared<GridObservation>(observe(world));
  const int depth = pick(rng, 1, 6);
  auto c = random_coeffs(kActionCount + 1, rng);
  auto loss = [=] {
    const GridObservation* batch[] = {obs.get()};
    const auto out = forward(config, params, batch, depth, true);
    return add(dot_const(out.logits, std::vector<double>(c.begin(), c.end() - 1)),
               dot_const(out.state_value, std::vector<double>{c.back()}));
  };
  return {loss, params.list()};
}

GradCheckResult run_check(const std::string& name, const Factory& make, const GradCheckOptions& options,
                          std::mt19937_64& rng) {
  GradCheckResult result;
  result.name = name;
  const int max_redraws = 20 * options.instances;
  while (result.instances < options.instances) {
    const Instance inst = make(rng);
    const Outcome out = check_instance(inst, options.step);
    if (out.kink) {
      if (++result.resampled > max_redraws) {
        throw std::runtime_error("gradcheck " + name + ": could not find instances away from kinks");
      }
      continue;
    }
    ++result.instances;
    result.max_relative_error = std::max(result.max_relative_error, out.error);
  }
  result.passed = result.max_relative_error < options.threshold;
  return result;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& options) {
  const std::pair<const char*, Factory> checks[] = {
      {"conv2d", conv_instance},
      {"sigmoid", sigmoid_instance},
      {"softmax_logp", softmax_instance},
      {"channel_max", channel_max_instance},
      {"mvprop_rollout", mvprop_instance},
      {"vprop_rollout", vprop_instance},
      {"vin_rollout", vin_instance},
      {"value_head", value_head_instance},
      {"planner_forward", planner_instance},
  };
  std::vector<GradCheckResult> results;
  std::mt19937_64 rng(options.seed);
  for (const auto& [name, make] : checks) results.push_back(run_check(name, make, options, rng));
  return results;
}

std::string format_gradcheck(const std::vector<GradCheckResult>& results) {
  std::string out;
  for (const auto& r : results) {
    char line[200];
    std::snprintf(line, sizeof line, "%-16s %s  instances=%d resampled=%d max_rel_err=%.3e\n", r.name.c_str(),
                  r.passed ? "PASS" : "FAIL", r.instances, r.resampled, r.max_relative_error);
    out += line;
  }
  return out;
}

}  // namespace vprop
