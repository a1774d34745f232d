#include <cmath>
#include <vector>

#include "nets.hpp"

namespace voxdistill::detail {

// Layout: W1[in][hidden], b1[hidden], W2[hidden][slots], b2[slots].
namespace {

struct Offsets {
  std::size_t w1, b1, w2, b2, end;
  explicit Offsets(int hidden) {
    const auto h = static_cast<std::size_t>(hidden);
    w1 = 0;
    b1 = w1 + static_cast<std::size_t>(kGlobalObsDims) * h;
    w2 = b1 + h;
    b2 = w2 + h * kSlots;
    end = b2 + kSlots;
  }
};

// Hidden pre-activations, skipping zero (masked) inputs.
void hidden_layer(const ControllerSpec& spec, const ObservationFrame& obs, const Offsets& o, std::vector<double>& h) {
  const auto H = static_cast<std::size_t>(spec.hyper.hidden);
  const double* p = spec.params.data();
  h.assign(p + o.b1, p + o.b1 + H);
  for (int s = 0; s < kSlots; ++s) {
    if (!obs.valid_mask[static_cast<std::size_t>(s)]) continue;
    const double* x = obs.slot(s);
    for (int j = 0; j < kSlotFeatures; ++j) {
      const double xi = x[j];
      if (xi == 0.0) continue;
      const double* w = p + o.w1 + static_cast<std::size_t>(s * kSlotFeatures + j) * H;
      for (std::size_t k = 0; k < H; ++k) h[k] += xi * w[k];
    }
  }
  const double t = obs.time_signal;
  if (t != 0.0) {
    const double* w = p + o.w1 + static_cast<std::size_t>(kGlobalObsDims - 1) * H;
    for (std::size_t k = 0; k < H; ++k) h[k] += t * w[k];
  }
  for (double& v : h) v = std::tanh(v);
}

}  // namespace

std::size_t global_fc_count(const Hyper& h) { return Offsets(h.hidden).end; }

void global_fc_init(const Hyper& h, Rng& rng, std::span<double> p) {
  const Offsets o(h.hidden);
  std::normal_distribution<double> w1(0.0, 1.0 / std::sqrt(static_cast<double>(kGlobalObsDims)));
  std::normal_distribution<double> w2(0.0, 1.0 / std::sqrt(static_cast<double>(h.hidden)));
  for (std::size_t i = o.w1; i < o.b1; ++i) p[i] = w1(rng);
  for (std::size_t i = o.w2; i < o.b2; ++i) p[i] = w2(rng);
}

ActionVector global_fc_forward(const ControllerSpec& spec, const ObservationFrame& obs) {
  const Offsets o(spec.hyper.hidden);
  const auto H = static_cast<std::size_t>(spec.hyper.hidden);
  thread_local std::vector<double> h;
  hidden_layer(spec, obs, o, h);
  const double* p = spec.params.data();
  ActionVector out;
  for (int s = 0; s < kSlots; ++s) {
    if (!obs.valid_mask[static_cast<std::size_t>(s)]) continue;
    double z = p[o.b2 + static_cast<std::size_t>(s)];
    for (std::size_t k = 0; k < H; ++k) z += h[k] * p[o.w2 + k * kSlots + static_cast<std::size_t>(s)];
    out.values[static_cast<std::size_t>(s)] = squash(z);
  }
  return out;
}

double global_fc_gradient(const ControllerSpec& spec, const ObservationFrame& obs, const ActionVector& target,
                          std::span<double> grad) {
  const Offsets o(spec.hyper.hidden);
  const auto H = static_cast<std::size_t>(spec.hyper.hidden);
  thread_local std::vector<double> h;
  thread_local std::vector<double> dh;
  hidden_layer(spec, obs, o, h);
  dh.assign(H, 0.0);
  const double* p = spec.params.data();
  double* g = grad.data();
  double sse = 0.0;
  for (int s = 0; s < kSlots; ++s) {
    const auto si = static_cast<std::size_t>(s);
    if (!obs.valid_mask[si]) continue;
    double z = p[o.b2 + si];
    for (std::size_t k = 0; k < H; ++k) z += h[k] * p[o.w2 + k * kSlots + si];
    const double th = std::tanh(z);
    const double err = squash(z) - target.values[si];
    sse += err * err;
    const double dz = err * (1.0 - th * th);  // 2 * err * 0.5 * sech^2
    g[o.b2 + si] += dz;
    for (std::size_t k = 0; k < H; ++k) {
      g[o.w2 + k * kSlots + si] += dz * h[k];
      dh[k] += dz * p[o.w2 + k * kSlots + si];
    }
  }
  for (std::size_t k = 0; k < H; ++k) dh[k] *= 1.0 - h[k] * h[k];
  for (std::size_t k = 0; k < H; ++k) g[o.b1 + k] += dh[k];
  for (int s = 0; s < kSlots; ++s) {
    if (!obs.valid_mask[static_cast<std::size_t>(s)]) continue;
    const double* x = obs.slot(s);
    for (int j = 0; j < kSlotFeatures; ++j) {
      const double xi = x[j];
      if (xi == 0.0) continue;
      double* gw = g + o.w1 + static_cast<std::size_t>(s * kSlotFeatures + j) * H;
      for (std::size_t k = 0; k < H; ++k) gw[k] += xi * dh[k];
    }
  }
  if (obs.time_signal != 0.0) {
    double* gw = g + o.w1 + static_cast<std::size_t>(kGlobalObsDims - 1) * H;
    for (std::size_t k = 0; k < H; ++k) gw[k] += obs.time_signal * dh[k];
  }
  return sse;
}

}  // namespace voxdistill::detail
