#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <vector>

#include "rondo/network.hpp"

namespace rondo {

enum class UpdateRule { Delayed, Interval };

const char* to_string(UpdateRule r);
UpdateRule parse_update_rule(const std::string& s);

struct LearnerConfig {
  double gamma = 0.99;
  double learning_rate = 7e-4;
  double rms_decay = 0.99;
  double rms_epsilon = 1e-5;
  double grad_clip_norm = 40.0;  // <= 0 disables clipping
  LossWeights loss;
  UpdateRule rule = UpdateRule::Delayed;
  int t_max = 5;  // segment length for the interval rule
  // Training-only safety cap; an unfinished episode is cut here and
  // bootstrapped from the value estimate.
  std::int64_t max_episode_steps = 3000;

  void validate() const;
  friend bool operator==(const LearnerConfig&, const LearnerConfig&) = default;
};

// R_t = f * sum_{k=t}^{T} gamma^(k-t) r_k + gamma^(T-t+1) * bootstrap, with
// f = l / l_max. Bootstrap is 0 for terminal episodes and V(s_{T+1}) for
// truncated ones; it is not rescaled by f.
std::vector<double> normalized_returns(std::span<const double> rewards, double gamma, double l, double l_max,
                                       double bootstrap);

// Draws from the categorical distribution with one uniform draw.
int sample_action(std::span<const double> policy, std::mt19937_64& rng);
int greedy_action(std::span<const double> policy);

struct ParameterSnapshot {
  std::shared_ptr<const std::vector<double>> params;
  std::uint64_t version = 0;
};

// Shared parameters with a shared RMSProp optimiser. pull() hands out an
// immutable snapshot; push() applies one clipped gradient atomically and
// bumps the version.
class ParameterStore {
 public:
  ParameterStore(NetworkShape shape, std::vector<double> params, LearnerConfig cfg);

  ParameterSnapshot pull() const;
  std::uint64_t push(std::span<const double> grad);

  const NetworkShape& shape() const { return shape_; }
  const LearnerConfig& config() const { return cfg_; }
  std::uint64_t version() const;
  std::vector<double> optimizer_state() const;
  void restore(std::vector<double> params, std::vector<double> optimizer_state, std::uint64_t version);

 private:
  NetworkShape shape_;
  LearnerConfig cfg_;
  mutable std::mutex mu_;
  std::shared_ptr<const std::vector<double>> params_;
  std::vector<double> mean_square_;
  std::uint64_t version_ = 0;
};

// Clips to the global norm `max_norm` in place (no-op for max_norm <= 0).
// Returns the norm before clipping.
double clip_global_norm(std::span<double> grad, double max_norm);

// Single push, same as store.push().
std::uint64_t apply_gradients(ParameterStore& store, std::span<const double> grad);

class GradientAccumulator {
 public:
  explicit GradientAccumulator(std::size_t n) : sum_(n, 0.0) {}
  std::span<double> buffer() { return sum_; }
  std::span<const double> values() const { return sum_; }
  void add(std::span<const double> g);
  void reset();
  int steps() const { return steps_; }
  void count_step() { ++steps_; }

 private:
  std::vector<double> sum_;
  int steps_ = 0;
};

// Activations are not kept; the gradient pass recomputes them from `obs`
// under the same parameters.
struct Transition {
  Observation obs;
  NetOutput out;
  int action = 0;
  double reward = 0.0;
};

// Adds the gradient of every transition, in order, using the supplied
// returns. Advantages are R_t - V(s_t) under the same parameters.
void accumulate_trajectory(const NetworkShape& shape, std::span<const double> params,
                           std::span<const Transition> steps, std::span<const double> returns,
                           const LossWeights& w, GradientAccumulator& acc);

// Gradient of the summed loss over `steps`, clipped to cfg.grad_clip_norm.
// Throws NonFiniteGradient naming the first step whose contribution is not
// finite.
std::vector<double> backward(const NetworkShape& shape, std::span<const double> params,
                             std::span<const Transition> steps, std::span<const double> returns,
                             const LearnerConfig& cfg);

// What the update drivers need from an episode.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual Observation observe() = 0;
  // Applies the action and returns the reward.
  virtual double act(int action) = 0;
  virtual bool terminal() const = 0;
  // Reward normalisation factor l / l_max for this episode.
  virtual double reward_scale() const { return 1.0; }
};

struct UpdateStats {
  std::int64_t steps = 0;
  double raw_return = 0.0;
  int pushes = 0;
  bool terminal = false;
  bool truncated = false;
  std::uint64_t version = 0;
};

// Hook run after each environment step (tests use it to interleave pushes
// from other workers).
using StepHook = std::function<void(std::int64_t step)>;

// Runs one full episode with the parameters pulled at its start, then pushes
// the summed (unclipped per step) gradient once; the push clips the sum.
// Throws ContractError when the episode is already over (nothing to push).
// `accumulated`, when given, receives the pushed sum before clipping.
UpdateStats run_delayed_episode(Environment& env, ParameterStore& store, std::mt19937_64& rng,
                                const StepHook& hook = {}, std::vector<double>* accumulated = nullptr);

// Conventional A3C: pull, run at most t_max steps, push, repeat until the
// episode ends.
UpdateStats run_interval_episode(Environment& env, ParameterStore& store, std::mt19937_64& rng,
                                 const StepHook& hook = {});

UpdateStats run_training_episode(Environment& env, ParameterStore& store, std::mt19937_64& rng,
                                 const StepHook& hook = {});

}  // namespace rondo
