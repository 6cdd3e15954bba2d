#include "rondo/learner.hpp"

#include <algorithm>
#include <cmath>

#include "rondo/errors.hpp"

namespace rondo {

const char* to_string(UpdateRule r) { return r == UpdateRule::Delayed ? "delayed" : "interval"; }

UpdateRule parse_update_rule(const std::string& s) {
  if (s == "delayed") return UpdateRule::Delayed;
  if (s == "interval") return UpdateRule::Interval;
  throw ValidationError("learner.rule must be \"delayed\" or \"interval\", got \"" + s + "\"");
}

void LearnerConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("learner.gamma must be in [0, 1]");
  if (!(learning_rate > 0.0)) throw ValidationError("learner.learning_rate must be positive");
  if (!(rms_decay > 0.0 && rms_decay < 1.0)) throw ValidationError("learner.rms_decay must be in (0, 1)");
  if (!(rms_epsilon > 0.0)) throw ValidationError("learner.rms_epsilon must be positive");
  if (loss.value_loss_weight < 0.0 || loss.entropy_beta < 0.0) {
    throw ValidationError("learner loss weights must be >= 0");
  }
  if (t_max < 1) throw ValidationError("learner.t_max must be >= 1");
  if (max_episode_steps < 1) throw ValidationError("learner.max_episode_steps must be >= 1");
}

std::vector<double> normalized_returns(std::span<const double> rewards, double gamma, double l, double l_max,
                                       double bootstrap) {
  const double f = normalization_factor(l, l_max);
  std::vector<double> out(rewards.size());
  // Back to front: the discounted reward sum and the bootstrap term are kept
  // apart so only the former is scaled.
  double acc = 0.0;
  double boot = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    boot *= gamma;
    out[i] = f * acc + boot;
  }
  return out;
}

int sample_action(std::span<const double> policy, std::mt19937_64& rng) {
  if (policy.empty()) throw ContractError("sample_action: empty policy");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double c = 0.0;
  int last = 0;
  for (std::size_t i = 0; i < policy.size(); ++i) {
    if (policy[i] <= 0.0) continue;
    c += policy[i];
    last = static_cast<int>(i);
    if (u < c) return last;
  }
  return last;
}

int greedy_action(std::span<const double> policy) {
  if (policy.empty()) throw ContractError("greedy_action: empty policy");
  return static_cast<int>(std::max_element(policy.begin(), policy.end()) - policy.begin());
}

ParameterStore::ParameterStore(NetworkShape shape, std::vector<double> params, LearnerConfig cfg)
    : shape_(shape), cfg_(cfg) {
  shape_.validate();
  cfg_.validate();
  if (params.size() != shape_.param_count()) {
    throw ContractError("parameter store: expected " + std::to_string(shape_.param_count()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  mean_square_.assign(params.size(), 0.0);
  params_ = std::make_shared<const std::vector<double>>(std::move(params));
}

ParameterSnapshot ParameterStore::pull() const {
  std::lock_guard lock(mu_);
  return {params_, version_};
}

double clip_global_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (double& g : grad) g *= k;
  }
  return norm;
}

std::uint64_t ParameterStore::push(std::span<const double> grad_in) {
  if (grad_in.size() != mean_square_.size()) throw ContractError("push: gradient size mismatch");
  std::vector<double> grad(grad_in.begin(), grad_in.end());
  clip_global_norm(grad, cfg_.grad_clip_norm);
  std::lock_guard lock(mu_);
  auto next = std::make_shared<std::vector<double>>(*params_);
  const double rho = cfg_.rms_decay;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    mean_square_[i] = rho * mean_square_[i] + (1.0 - rho) * g * g;
    if (g != 0.0) (*next)[i] -= cfg_.learning_rate * g / (std::sqrt(mean_square_[i]) + cfg_.rms_epsilon);
  }
  params_ = std::move(next);
  return ++version_;
}

std::uint64_t ParameterStore::version() const {
  std::lock_guard lock(mu_);
  return version_;
}

std::vector<double> ParameterStore::optimizer_state() const {
  std::lock_guard lock(mu_);
  return mean_square_;
}

void ParameterStore::restore(std::vector<double> params, std::vector<double> optimizer_state, std::uint64_t version) {
  if (params.size() != shape_.param_count()) throw ContractError("restore: parameter count mismatch");
  if (optimizer_state.empty()) optimizer_state.assign(params.size(), 0.0);
  if (optimizer_state.size() != params.size()) throw ContractError("restore: optimizer state size mismatch");
  std::lock_guard lock(mu_);
  params_ = std::make_shared<const std::vector<double>>(std::move(params));
  mean_square_ = std::move(optimizer_state);
  version_ = version;
}

std::uint64_t apply_gradients(ParameterStore& store, std::span<const double> grad) { return store.push(grad); }

void GradientAccumulator::add(std::span<const double> g) {
  if (g.size() != sum_.size()) throw ContractError("accumulator: gradient size mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) sum_[i] += g[i];
  ++steps_;
}

void GradientAccumulator::reset() {
  std::fill(sum_.begin(), sum_.end(), 0.0);
  steps_ = 0;
}

void accumulate_trajectory(const NetworkShape& shape, std::span<const double> params,
                           std::span<const Transition> steps, std::span<const double> returns, const LossWeights& w,
                           GradientAccumulator& acc) {
  if (steps.size() != returns.size()) throw ContractError("accumulate_trajectory: returns/steps size mismatch");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Transition& t = steps[i];
    ForwardCache cache;
    const NetOutput out = forward(shape, params, t.obs, &cache);
    const double advantage = returns[i] - out.value;
    add_step_gradient(shape, params, t.obs, cache, out, t.action, advantage, returns[i], w, acc.buffer());
    acc.count_step();
  }
}

std::vector<double> backward(const NetworkShape& shape, std::span<const double> params,
                             std::span<const Transition> steps, std::span<const double> returns,
                             const LearnerConfig& cfg) {
  if (steps.size() != returns.size()) throw ContractError("backward: returns/steps size mismatch");
  std::vector<double> total(params.size(), 0.0);
  std::vector<double> one(params.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Transition& t = steps[i];
    std::fill(one.begin(), one.end(), 0.0);
    ForwardCache cache;
    const NetOutput out = forward(shape, params, t.obs, &cache);
    add_step_gradient(shape, params, t.obs, cache, out, t.action, returns[i] - out.value, returns[i], cfg.loss, one);
    for (std::size_t k = 0; k < one.size(); ++k) {
      if (!std::isfinite(one[k])) {
        throw NonFiniteGradient("non-finite gradient at step " + std::to_string(i), i);
      }
      total[k] += one[k];
    }
  }
  clip_global_norm(total, cfg.grad_clip_norm);
  return total;
}

namespace {

// Collects up to `limit` transitions under fixed parameters.
struct Segment {
  std::vector<Transition> steps;
  double bootstrap = 0.0;
};

Segment collect(Environment& env, const NetworkShape& shape, std::span<const double> params, std::int64_t limit,
                std::mt19937_64& rng, UpdateStats& stats, std::int64_t step_cap, const StepHook& hook) {
  Segment seg;
  while (!env.terminal() && static_cast<std::int64_t>(seg.steps.size()) < limit && stats.steps < step_cap) {
    Transition t;
    t.obs = env.observe();
    t.out = forward(shape, params, t.obs);
    t.action = sample_action(t.out.policy, rng);
    t.reward = env.act(t.action);
    stats.raw_return += t.reward;
    ++stats.steps;
    seg.steps.push_back(std::move(t));
    if (hook) hook(stats.steps);
  }
  if (!env.terminal() && !seg.steps.empty()) seg.bootstrap = forward(shape, params, env.observe()).value;
  return seg;
}

void push_segment(Environment& env, ParameterStore& store, const ParameterSnapshot& snap, const Segment& seg,
                  UpdateStats& stats, std::vector<double>* accumulated = nullptr) {
  if (seg.steps.empty()) return;
  std::vector<double> rewards;
  rewards.reserve(seg.steps.size());
  for (const Transition& t : seg.steps) rewards.push_back(t.reward);
  const double f = env.reward_scale();
  const auto returns = normalized_returns(rewards, store.config().gamma, f, 1.0, seg.bootstrap);
  GradientAccumulator acc(snap.params->size());
  accumulate_trajectory(store.shape(), *snap.params, seg.steps, returns, store.config().loss, acc);
  if (accumulated) accumulated->assign(acc.values().begin(), acc.values().end());
  stats.version = store.push(acc.values());
  ++stats.pushes;
}

}  // namespace

UpdateStats run_delayed_episode(Environment& env, ParameterStore& store, std::mt19937_64& rng, const StepHook& hook,
                                std::vector<double>* accumulated) {
  if (env.terminal()) throw ContractError("delayed update: episode already finished, nothing to push");
  UpdateStats stats;
  const ParameterSnapshot snap = store.pull();
  const std::int64_t cap = store.config().max_episode_steps;
  Segment seg = collect(env, store.shape(), *snap.params, cap, rng, stats, cap, hook);
  push_segment(env, store, snap, seg, stats, accumulated);
  stats.terminal = env.terminal();
  stats.truncated = !stats.terminal;
  return stats;
}

UpdateStats run_interval_episode(Environment& env, ParameterStore& store, std::mt19937_64& rng, const StepHook& hook) {
  UpdateStats stats;
  const std::int64_t cap = store.config().max_episode_steps;
  while (!env.terminal() && stats.steps < cap) {
    const ParameterSnapshot snap = store.pull();
    Segment seg = collect(env, store.shape(), *snap.params, store.config().t_max, rng, stats, cap, hook);
    push_segment(env, store, snap, seg, stats);
  }
  stats.terminal = env.terminal();
  stats.truncated = !stats.terminal;
  return stats;
}

UpdateStats run_training_episode(Environment& env, ParameterStore& store, std::mt19937_64& rng, const StepHook& hook) {
  return store.config().rule == UpdateRule::Delayed ? run_delayed_episode(env, store, rng, hook)
                                                    : run_interval_episode(env, store, rng, hook);
}

}  // namespace rondo
