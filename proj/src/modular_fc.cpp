#include <cmath>
#include <vector>

#include "nets.hpp"

namespace voxdistill::detail {

// Layout: W1[in][hidden], b1[hidden], w2[hidden], b2.
namespace {

struct Offsets {
  std::size_t w1, b1, w2, b2, end;
  explicit Offsets(int hidden) {
    const auto h = static_cast<std::size_t>(hidden);
    w1 = 0;
    b1 = static_cast<std::size_t>(kLocalObsDims) * h;
    w2 = b1 + h;
    b2 = w2 + h;
    end = b2 + 1;
  }
};

void hidden_layer(const ControllerSpec& spec, const LocalObservation& x, const Offsets& o, std::vector<double>& h) {
  const auto H = static_cast<std::size_t>(spec.hyper.hidden);
  const double* p = spec.params.data();
  h.assign(p + o.b1, p + o.b1 + H);
  for (int i = 0; i < kLocalObsDims; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    if (xi == 0.0) continue;
    const double* w = p + o.w1 + static_cast<std::size_t>(i) * H;
    for (std::size_t k = 0; k < H; ++k) h[k] += xi * w[k];
  }
  for (double& v : h) v = std::tanh(v);
}

}  // namespace

std::size_t modular_fc_count(const Hyper& h) { return Offsets(h.hidden).end; }

void modular_fc_init(const Hyper& h, Rng& rng, std::span<double> p) {
  const Offsets o(h.hidden);
  std::normal_distribution<double> w1(0.0, 1.0 / std::sqrt(static_cast<double>(kLocalObsDims)));
  std::normal_distribution<double> w2(0.0, 1.0 / std::sqrt(static_cast<double>(h.hidden)));
  for (std::size_t i = o.w1; i < o.b1; ++i) p[i] = w1(rng);
  for (std::size_t i = o.w2; i < o.b2; ++i) p[i] = w2(rng);
}

double modular_fc_slot(const ControllerSpec& spec, const LocalObservation& x) {
  const Offsets o(spec.hyper.hidden);
  const auto H = static_cast<std::size_t>(spec.hyper.hidden);
  thread_local std::vector<double> h;
  hidden_layer(spec, x, o, h);
  const double* p = spec.params.data();
  double z = p[o.b2];
  for (std::size_t k = 0; k < H; ++k) z += h[k] * p[o.w2 + k];
  return squash(z);
}

double modular_fc_slot_gradient(const ControllerSpec& spec, const LocalObservation& x, double target,
                                std::span<double> grad) {
  const Offsets o(spec.hyper.hidden);
  const auto H = static_cast<std::size_t>(spec.hyper.hidden);
  thread_local std::vector<double> h;
  hidden_layer(spec, x, o, h);
  const double* p = spec.params.data();
  double* g = grad.data();
  double z = p[o.b2];
  for (std::size_t k = 0; k < H; ++k) z += h[k] * p[o.w2 + k];
  const double th = std::tanh(z);
  const double err = squash(z) - target;
  const double dz = err * (1.0 - th * th);
  g[o.b2] += dz;
  thread_local std::vector<double> dh;
  dh.resize(H);
  for (std::size_t k = 0; k < H; ++k) {
    g[o.w2 + k] += dz * h[k];
    dh[k] = dz * p[o.w2 + k] * (1.0 - h[k] * h[k]);
    g[o.b1 + k] += dh[k];
  }
  for (int i = 0; i < kLocalObsDims; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    if (xi == 0.0) continue;
    double* gw = g + o.w1 + static_cast<std::size_t>(i) * H;
    for (std::size_t k = 0; k < H; ++k) gw[k] += xi * dh[k];
  }
  return err * err;
}

}  // namespace voxdistill::detail
