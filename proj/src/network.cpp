#include "rondo/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rondo/errors.hpp"

namespace rondo {

std::size_t NetworkShape::param_count() const { return ParamLayout(*this).total; }

void NetworkShape::validate() const {
  if (input_channels < 1 || input_size < 1 || conv1_filters < 1 || conv2_filters < 1 || hidden < 1 ||
      nonvisual < 0) {
    throw ValidationError("network: sizes must be positive");
  }
  if (conv1_kernel < 1 || conv1_stride < 1 || conv2_kernel < 1 || conv2_stride < 1) {
    throw ValidationError("network: kernels and strides must be positive");
  }
  if (conv1_kernel > input_size || conv2_kernel > conv1_out()) {
    throw ValidationError("network: kernel larger than its input");
  }
}

NetworkShape NetworkShape::for_role(AgentRole role) {
  NetworkShape s;
  const int channels = role == AgentRole::Active ? 4 : 3;
  s.input_channels = 4 * channels;
  s.nonvisual = role == AgentRole::Active ? 6 : 4;
  return s;
}

ParamLayout::ParamLayout(const NetworkShape& s) {
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    const std::size_t off = at;
    at += n;
    return off;
  };
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  conv1_w = take(u(s.input_channels) * u(s.conv1_kernel) * u(s.conv1_kernel) * u(s.conv1_filters));
  conv1_b = take(u(s.conv1_filters));
  conv2_w = take(u(s.conv2_kernel) * u(s.conv2_kernel) * u(s.conv1_filters) * u(s.conv2_filters));
  conv2_b = take(u(s.conv2_filters));
  fc_w = take(u(s.hidden) * u(s.fc_inputs()));
  fc_b = take(u(s.hidden));
  value_w = take(u(s.hidden));
  value_b = take(1);
  policy_w = take(u(kActionCount) * u(s.hidden));
  policy_b = take(u(kActionCount));
  total = at;
}

std::vector<double> init_params(const NetworkShape& shape, std::uint64_t seed) {
  shape.validate();
  const ParamLayout L(shape);
  std::vector<double> p(L.total, 0.0);
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t off, std::size_t n, double fan_in, double gain) {
    const double bound = gain * std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> d(-bound, bound);
    for (std::size_t i = 0; i < n; ++i) p[off + i] = d(rng);
  };
  const double k1 = shape.conv1_kernel * shape.conv1_kernel;
  const double k2 = shape.conv2_kernel * shape.conv2_kernel;
  fill(L.conv1_w, L.conv1_b - L.conv1_w, k1 * shape.input_channels, 1.0);
  fill(L.conv2_w, L.conv2_b - L.conv2_w, k2 * shape.conv1_filters, 1.0);
  fill(L.fc_w, L.fc_b - L.fc_w, shape.fc_inputs(), 1.0);
  fill(L.value_w, L.value_b - L.value_w, shape.hidden, 0.5);
  fill(L.policy_w, L.policy_b - L.policy_w, shape.hidden, 0.01);
  return p;
}

namespace {

// Output rows/cols [lo, hi] whose receptive field covers input index i.
inline void covering(int i, int kernel, int stride, int out, int& lo, int& hi) {
  const int first = i - kernel + 1;
  lo = first > 0 ? (first + stride - 1) / stride : 0;
  hi = std::min(out - 1, i / stride);
}

void check_sizes(const NetworkShape& shape, std::span<const double> params, const Observation& obs) {
  if (params.size() != shape.param_count()) {
    throw ContractError("network: expected " + std::to_string(shape.param_count()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  if (obs.visual.size() != shape.visual_size()) {
    throw ContractError("network: expected visual input of " + std::to_string(shape.visual_size()) + " values, got " +
                        std::to_string(obs.visual.size()));
  }
  if (obs.nonvisual.size() != static_cast<std::size_t>(shape.nonvisual)) {
    throw ContractError("network: expected " + std::to_string(shape.nonvisual) + " non-visual features, got " +
                        std::to_string(obs.nonvisual.size()));
  }
}

}  // namespace

NetOutput forward(const NetworkShape& s, std::span<const double> params, const Observation& obs, ForwardCache* cache) {
  check_sizes(s, params, obs);
  const ParamLayout L(s);
  const int n = s.input_size, o1 = s.conv1_out(), o2 = s.conv2_out();
  const int f1 = s.conv1_filters, f2 = s.conv2_filters, k1 = s.conv1_kernel, k2 = s.conv2_kernel;
  const int st1 = s.conv1_stride, st2 = s.conv2_stride;

  // conv1: scatter every non-zero input into the outputs that see it.
  std::vector<double> a1(static_cast<std::size_t>(o1 * o1 * f1));
  for (int oy = 0; oy < o1; ++oy)
    for (int ox = 0; ox < o1; ++ox)
      for (int f = 0; f < f1; ++f) a1[static_cast<std::size_t>((oy * o1 + ox) * f1 + f)] = params[L.conv1_b + f];
  for (int c = 0; c < s.input_channels; ++c) {
    for (int y = 0; y < n; ++y) {
      int oy0, oy1;
      covering(y, k1, st1, o1, oy0, oy1);
      for (int x = 0; x < n; ++x) {
        const double v = obs.visual[static_cast<std::size_t>((c * n + y) * n + x)];
        if (v == 0.0) continue;
        int ox0, ox1;
        covering(x, k1, st1, o1, ox0, ox1);
        for (int oy = oy0; oy <= oy1; ++oy) {
          const int ky = y - oy * st1;
          for (int ox = ox0; ox <= ox1; ++ox) {
            const int kx = x - ox * st1;
            const double* w = &params[L.conv1_w + static_cast<std::size_t>(((c * k1 + ky) * k1 + kx) * f1)];
            double* out = &a1[static_cast<std::size_t>((oy * o1 + ox) * f1)];
            for (int f = 0; f < f1; ++f) out[f] += w[f] * v;
          }
        }
      }
    }
  }
  for (double& v : a1) v = std::max(v, 0.0);

  // conv2, dense over the (mostly rectified) conv1 map.
  std::vector<double> a2(static_cast<std::size_t>(o2 * o2 * f2));
  for (int oy = 0; oy < o2; ++oy) {
    for (int ox = 0; ox < o2; ++ox) {
      double* out = &a2[static_cast<std::size_t>((oy * o2 + ox) * f2)];
      for (int f = 0; f < f2; ++f) out[f] = params[L.conv2_b + f];
      for (int ky = 0; ky < k2; ++ky) {
        for (int kx = 0; kx < k2; ++kx) {
          const double* in = &a1[static_cast<std::size_t>(((oy * st2 + ky) * o1 + (ox * st2 + kx)) * f1)];
          for (int c = 0; c < f1; ++c) {
            if (in[c] == 0.0) continue;
            const double* w = &params[L.conv2_w + static_cast<std::size_t>(((ky * k2 + kx) * f1 + c) * f2)];
            for (int f = 0; f < f2; ++f) out[f] += w[f] * in[c];
          }
        }
      }
      for (int f = 0; f < f2; ++f) out[f] = std::max(out[f], 0.0);
    }
  }

  // fully connected over [conv features, non-visual].
  const int nf = s.fc_inputs();
  const int nc = s.conv_features();
  std::vector<double> h(static_cast<std::size_t>(s.hidden));
  for (int j = 0; j < s.hidden; ++j) {
    const double* w = &params[L.fc_w + static_cast<std::size_t>(j) * nf];
    double acc = params[L.fc_b + j];
    for (int k = 0; k < nc; ++k) acc += w[k] * a2[static_cast<std::size_t>(k)];
    for (int k = 0; k < s.nonvisual; ++k) acc += w[nc + k] * obs.nonvisual[static_cast<std::size_t>(k)];
    h[static_cast<std::size_t>(j)] = std::max(acc, 0.0);
  }

  NetOutput out;
  out.value = params[L.value_b];
  for (int j = 0; j < s.hidden; ++j) out.value += params[L.value_w + j] * h[static_cast<std::size_t>(j)];
  std::array<double, kActionCount> logits{};
  for (int a = 0; a < kActionCount; ++a) {
    double acc = params[L.policy_b + a];
    const double* w = &params[L.policy_w + static_cast<std::size_t>(a) * s.hidden];
    for (int j = 0; j < s.hidden; ++j) acc += w[j] * h[static_cast<std::size_t>(j)];
    logits[static_cast<std::size_t>(a)] = acc;
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (int a = 0; a < kActionCount; ++a) {
    out.policy[static_cast<std::size_t>(a)] = std::exp(logits[static_cast<std::size_t>(a)] - zmax);
    z += out.policy[static_cast<std::size_t>(a)];
  }
  for (double& p : out.policy) p /= z;

  if (cache) {
    cache->conv1 = std::move(a1);
    cache->conv2 = std::move(a2);
    cache->hidden = std::move(h);
    cache->logits = logits;
  }
  return out;
}

namespace {

double entropy(const NetOutput& out) {
  double h = 0.0;
  for (double p : out.policy) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double step_loss(const NetOutput& out, int action, double advantage, double ret, const LossWeights& w) {
  const double td = ret - out.value;
  return -std::log(out.policy[static_cast<std::size_t>(action)]) * advantage + w.value_loss_weight * td * td -
         w.entropy_beta * entropy(out);
}

void add_step_gradient(const NetworkShape& s, std::span<const double> params, const Observation& obs,
                       const ForwardCache& cache, const NetOutput& out, int action, double advantage, double ret,
                       const LossWeights& lw, std::span<double> grad) {
  check_sizes(s, params, obs);
  if (grad.size() != params.size()) throw ContractError("gradient buffer does not match parameter count");
  if (action < 0 || action >= kActionCount) throw ContractError("action index out of range");
  const ParamLayout L(s);
  const int n = s.input_size, o1 = s.conv1_out(), o2 = s.conv2_out();
  const int f1 = s.conv1_filters, f2 = s.conv2_filters, k1 = s.conv1_kernel, k2 = s.conv2_kernel;
  const int st1 = s.conv1_stride, st2 = s.conv2_stride;
  const int nf = s.fc_inputs(), nc = s.conv_features();

  // Head gradients.
  const double H = entropy(out);
  std::array<double, kActionCount> dlogit{};
  for (int a = 0; a < kActionCount; ++a) {
    const double p = out.policy[static_cast<std::size_t>(a)];
    const double onehot = a == action ? 1.0 : 0.0;
    const double dent = p > 0.0 ? lw.entropy_beta * p * (std::log(p) + H) : 0.0;
    dlogit[static_cast<std::size_t>(a)] = -advantage * (onehot - p) + dent;
  }
  const double dvalue = -2.0 * lw.value_loss_weight * (ret - out.value);

  std::vector<double> dh(static_cast<std::size_t>(s.hidden), 0.0);
  for (int a = 0; a < kActionCount; ++a) {
    const double g = dlogit[static_cast<std::size_t>(a)];
    grad[L.policy_b + a] += g;
    const std::size_t row = L.policy_w + static_cast<std::size_t>(a) * s.hidden;
    for (int j = 0; j < s.hidden; ++j) {
      grad[row + j] += g * cache.hidden[static_cast<std::size_t>(j)];
      dh[static_cast<std::size_t>(j)] += g * params[row + j];
    }
  }
  grad[L.value_b] += dvalue;
  for (int j = 0; j < s.hidden; ++j) {
    grad[L.value_w + j] += dvalue * cache.hidden[static_cast<std::size_t>(j)];
    dh[static_cast<std::size_t>(j)] += dvalue * params[L.value_w + j];
  }

  // Hidden layer.
  std::vector<double> da2(static_cast<std::size_t>(nc), 0.0);
  for (int j = 0; j < s.hidden; ++j) {
    if (cache.hidden[static_cast<std::size_t>(j)] <= 0.0) continue;
    const double g = dh[static_cast<std::size_t>(j)];
    if (g == 0.0) continue;
    const std::size_t row = L.fc_w + static_cast<std::size_t>(j) * nf;
    grad[L.fc_b + j] += g;
    for (int k = 0; k < nc; ++k) {
      grad[row + k] += g * cache.conv2[static_cast<std::size_t>(k)];
      da2[static_cast<std::size_t>(k)] += g * params[row + k];
    }
    for (int k = 0; k < s.nonvisual; ++k) grad[row + nc + k] += g * obs.nonvisual[static_cast<std::size_t>(k)];
  }

  // conv2.
  std::vector<double> da1(static_cast<std::size_t>(o1 * o1 * f1), 0.0);
  for (int oy = 0; oy < o2; ++oy) {
    for (int ox = 0; ox < o2; ++ox) {
      const std::size_t base = static_cast<std::size_t>((oy * o2 + ox) * f2);
      bool any = false;
      for (int f = 0; f < f2; ++f) {
        if (cache.conv2[base + f] > 0.0 && da2[base + f] != 0.0) any = true;
      }
      if (!any) continue;
      double dpre[1024];
      std::vector<double> big;
      double* d = dpre;
      if (f2 > 1024) {
        big.resize(static_cast<std::size_t>(f2));
        d = big.data();
      }
      for (int f = 0; f < f2; ++f) {
        d[f] = cache.conv2[base + f] > 0.0 ? da2[base + f] : 0.0;
        grad[L.conv2_b + f] += d[f];
      }
      for (int ky = 0; ky < k2; ++ky) {
        for (int kx = 0; kx < k2; ++kx) {
          const std::size_t in_base = static_cast<std::size_t>(((oy * st2 + ky) * o1 + (ox * st2 + kx)) * f1);
          for (int c = 0; c < f1; ++c) {
            const std::size_t wrow = L.conv2_w + static_cast<std::size_t>(((ky * k2 + kx) * f1 + c) * f2);
            const double in = cache.conv1[in_base + c];
            double back = 0.0;
            for (int f = 0; f < f2; ++f) {
              grad[wrow + f] += d[f] * in;
              back += params[wrow + f] * d[f];
            }
            da1[in_base + c] += back;
          }
        }
      }
    }
  }

  // conv1: rectifier mask, then scatter over non-zero inputs.
  for (std::size_t i = 0; i < da1.size(); ++i) {
    if (cache.conv1[i] <= 0.0) da1[i] = 0.0;
  }
  for (int oy = 0; oy < o1; ++oy)
    for (int ox = 0; ox < o1; ++ox)
      for (int f = 0; f < f1; ++f) grad[L.conv1_b + f] += da1[static_cast<std::size_t>((oy * o1 + ox) * f1 + f)];
  for (int c = 0; c < s.input_channels; ++c) {
    for (int y = 0; y < n; ++y) {
      int oy0, oy1;
      covering(y, k1, st1, o1, oy0, oy1);
      for (int x = 0; x < n; ++x) {
        const double v = obs.visual[static_cast<std::size_t>((c * n + y) * n + x)];
        if (v == 0.0) continue;
        int ox0, ox1;
        covering(x, k1, st1, o1, ox0, ox1);
        for (int oy = oy0; oy <= oy1; ++oy) {
          const int ky = y - oy * st1;
          for (int ox = ox0; ox <= ox1; ++ox) {
            const int kx = x - ox * st1;
            double* g = &grad[L.conv1_w + static_cast<std::size_t>(((c * k1 + ky) * k1 + kx) * f1)];
            const double* d = &da1[static_cast<std::size_t>((oy * o1 + ox) * f1)];
            for (int f = 0; f < f1; ++f) g[f] += d[f] * v;
          }
        }
      }
    }
  }
}

}  // namespace rondo
