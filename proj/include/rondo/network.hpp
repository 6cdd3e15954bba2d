#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rondo/sim.hpp"

namespace rondo {

// Convolutional actor-critic: two rectified conv layers over the stacked
// semantic frames, the flattened result concatenated with the non-visual
// features, one rectified hidden layer, then a linear value head and a
// softmax policy head over kActionCount actions.
struct NetworkShape {
  int input_channels = 16;  // frames * semantic channels
  int input_size = 84;
  int conv1_filters = 16;
  int conv1_kernel = 8;
  int conv1_stride = 4;
  int conv2_filters = 32;
  int conv2_kernel = 4;
  int conv2_stride = 2;
  int hidden = 256;
  int nonvisual = 6;

  int conv1_out() const { return (input_size - conv1_kernel) / conv1_stride + 1; }
  int conv2_out() const { return (conv1_out() - conv2_kernel) / conv2_stride + 1; }
  int conv_features() const { return conv2_filters * conv2_out() * conv2_out(); }
  int fc_inputs() const { return conv_features() + nonvisual; }
  std::size_t visual_size() const {
    return static_cast<std::size_t>(input_channels) * input_size * input_size;
  }
  std::size_t param_count() const;
  void validate() const;

  static NetworkShape for_role(AgentRole role);
  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

// Offsets of each tensor inside the flat parameter vector. Storage order and
// layouts:
//   conv1_w [in_channel][ky][kx][filter]      conv1_b [filter]
//   conv2_w [ky][kx][in_channel][filter]      conv2_b [filter]
//   fc_w    [hidden][fc_input]                fc_b    [hidden]
//   value_w [hidden]                          value_b
//   policy_w[action][hidden]                  policy_b[action]
// Conv activations are stored [y][x][channel]; the flattened conv features
// follow that order and precede the non-visual features in the fc input.
struct ParamLayout {
  std::size_t conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b, value_w, value_b, policy_w, policy_b, total;
  explicit ParamLayout(const NetworkShape& s);
};

struct Observation {
  std::vector<std::uint8_t> visual;  // [channel][row][col], binary for real frames
  std::vector<double> nonvisual;
};

struct ForwardCache {
  std::vector<double> conv1;   // post-activation
  std::vector<double> conv2;   // post-activation
  std::vector<double> hidden;  // post-activation
  std::array<double, kActionCount> logits{};
};

struct NetOutput {
  double value = 0.0;
  std::array<double, kActionCount> policy{};
};

// Random initial parameters (He-uniform for rectified layers, small policy
// head so the initial policy is close to uniform).
std::vector<double> init_params(const NetworkShape& shape, std::uint64_t seed);

// Deterministic forward pass. Accumulation follows storage order. Throws
// ContractError on input or parameter size mismatch.
NetOutput forward(const NetworkShape& shape, std::span<const double> params, const Observation& obs,
                  ForwardCache* cache = nullptr);

// Per-step loss terms, weights as in LossWeights.
struct LossWeights {
  double value_loss_weight = 0.5;
  double entropy_beta = 0.01;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// -log pi(a|s) * advantage + value_loss_weight * (ret - V)^2 - entropy_beta * H.
// `advantage` is a constant supplied by the caller (the policy term does not
// differentiate through it).
double step_loss(const NetOutput& out, int action, double advantage, double ret, const LossWeights& w);

// Adds the gradient of step_loss for one step into `grad` (same layout as
// params). `cache` must come from forward() on the same params and input.
void add_step_gradient(const NetworkShape& shape, std::span<const double> params, const Observation& obs,
                       const ForwardCache& cache, const NetOutput& out, int action, double advantage, double ret,
                       const LossWeights& w, std::span<double> grad);

}  // namespace rondo
