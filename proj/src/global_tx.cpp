#include <algorithm>
#include <cmath>
#include <vector>

#include "nets.hpp"

// Pre-norm transformer encoder over the occupied slots. Each token is
// (8 slot features, time signal) embedded linearly plus a learned
// per-slot position vector; empty slots are not tokens at all.

namespace voxdistill::detail {

namespace {

constexpr int kTokenInputs = kSlotFeatures + 1;
constexpr double kLnEps = 1e-5;

struct LayerOffsets {
  std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct Layout {
  std::size_t D, F, L, heads;
  std::size_t w_in, b_in, pos;
  std::vector<LayerOffsets> layer;
  std::size_t lnf_g, lnf_b, w_head, b_head, end;

  explicit Layout(const Hyper& h)
      : D(static_cast<std::size_t>(h.model_dim)),
        F(static_cast<std::size_t>(h.ff_dim)),
        L(static_cast<std::size_t>(h.layers)),
        heads(static_cast<std::size_t>(h.heads)) {
    std::size_t at = 0;
    auto take = [&at](std::size_t n) {
      const std::size_t here = at;
      at += n;
      return here;
    };
    w_in = take(kTokenInputs * D);
    b_in = take(D);
    pos = take(kSlots * D);
    for (std::size_t l = 0; l < L; ++l) {
      LayerOffsets o{};
      o.ln1_g = take(D);
      o.ln1_b = take(D);
      o.wq = take(D * D);
      o.bq = take(D);
      o.wk = take(D * D);
      o.bk = take(D);
      o.wv = take(D * D);
      o.bv = take(D);
      o.wo = take(D * D);
      o.bo = take(D);
      o.ln2_g = take(D);
      o.ln2_b = take(D);
      o.w1 = take(D * F);
      o.b1 = take(F);
      o.w2 = take(F * D);
      o.b2 = take(D);
      layer.push_back(o);
    }
    lnf_g = take(D);
    lnf_b = take(D);
    w_head = take(D);
    b_head = take(1);
    end = at;
  }
};

// Y[n][out] = X[n][in] W[in][out] + b
void linear(const double* X, std::size_t n, std::size_t in, const double* W, const double* b, std::size_t out,
            double* Y) {
  for (std::size_t i = 0; i < n; ++i) {
    double* y = Y + i * out;
    std::copy(b, b + out, y);
    const double* x = X + i * in;
    for (std::size_t j = 0; j < in; ++j) {
      const double xj = x[j];
      const double* w = W + j * out;
      for (std::size_t o = 0; o < out; ++o) y[o] += xj * w[o];
    }
  }
}

void linear_backward(const double* X, std::size_t n, std::size_t in, const double* W, std::size_t out,
                     const double* dY, double* dX, double* dW, double* db) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* dy = dY + i * out;
    const double* x = X + i * in;
    for (std::size_t o = 0; o < out; ++o) db[o] += dy[o];
    for (std::size_t j = 0; j < in; ++j) {
      const double* w = W + j * out;
      double* dw = dW + j * out;
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        dw[o] += x[j] * dy[o];
        acc += w[o] * dy[o];
      }
      if (dX != nullptr) dX[i * in + j] += acc;
    }
  }
}

// Row-wise layer norm; stores normalized rows and inverse std for backward.
void layer_norm(const double* X, std::size_t n, std::size_t D, const double* g, const double* b, double* xhat,
                double* inv, double* Y) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = X + i * D;
    double mu = 0.0;
    for (std::size_t c = 0; c < D; ++c) mu += x[c];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t c = 0; c < D; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<double>(D);
    const double r = 1.0 / std::sqrt(var + kLnEps);
    inv[i] = r;
    for (std::size_t c = 0; c < D; ++c) {
      xhat[i * D + c] = (x[c] - mu) * r;
      Y[i * D + c] = g[c] * xhat[i * D + c] + b[c];
    }
  }
}

void layer_norm_backward(const double* xhat, const double* inv, std::size_t n, std::size_t D, const double* g,
                         const double* dY, double* dX, double* dg, double* db) {
  std::vector<double> dxh(D);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t c = 0; c < D; ++c) {
      const double dy = dY[i * D + c];
      dg[c] += dy * xhat[i * D + c];
      db[c] += dy;
      dxh[c] = dy * g[c];
      mean_d += dxh[c];
      mean_dx += dxh[c] * xhat[i * D + c];
    }
    mean_d /= static_cast<double>(D);
    mean_dx /= static_cast<double>(D);
    for (std::size_t c = 0; c < D; ++c) {
      dX[i * D + c] += inv[i] * (dxh[c] - mean_d - xhat[i * D + c] * mean_dx);
    }
  }
}

struct LayerCache {
  std::vector<double> x_in, xhat1, inv1, a, q, k, v, p, o, x_mid, xhat2, inv2, c, f;
};

struct Cache {
  std::vector<int> slots;
  std::vector<double> u;  // token inputs [n][kTokenInputs]
  std::vector<LayerCache> layers;
  std::vector<double> x_out, xhatf, invf, y, z;
};

void forward_pass(const ControllerSpec& spec, const ObservationFrame& obs, const Layout& lay, Cache& c) {
  const double* p = spec.params.data();
  const std::size_t D = lay.D, F = lay.F, NH = lay.heads, dh = D / NH;
  c.slots.clear();
  for (int s = 0; s < kSlots; ++s) {
    if (obs.valid_mask[static_cast<std::size_t>(s)]) c.slots.push_back(s);
  }
  const std::size_t n = c.slots.size();
  c.u.assign(n * kTokenInputs, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* f = obs.slot(c.slots[i]);
    std::copy(f, f + kSlotFeatures, c.u.begin() + static_cast<std::ptrdiff_t>(i * kTokenInputs));
    c.u[i * kTokenInputs + kSlotFeatures] = obs.time_signal;
  }

  std::vector<double> x(n * D);
  linear(c.u.data(), n, kTokenInputs, p + lay.w_in, p + lay.b_in, D, x.data());
  for (std::size_t i = 0; i < n; ++i) {
    const double* pe = p + lay.pos + static_cast<std::size_t>(c.slots[i]) * D;
    for (std::size_t d = 0; d < D; ++d) x[i * D + d] += pe[d];
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.layers.resize(lay.L);
  for (std::size_t l = 0; l < lay.L; ++l) {
    const LayerOffsets& o = lay.layer[l];
    LayerCache& lc = c.layers[l];
    lc.x_in = x;
    lc.xhat1.resize(n * D);
    lc.inv1.resize(n);
    lc.a.resize(n * D);
    layer_norm(x.data(), n, D, p + o.ln1_g, p + o.ln1_b, lc.xhat1.data(), lc.inv1.data(), lc.a.data());
    lc.q.resize(n * D);
    lc.k.resize(n * D);
    lc.v.resize(n * D);
    linear(lc.a.data(), n, D, p + o.wq, p + o.bq, D, lc.q.data());
    linear(lc.a.data(), n, D, p + o.wk, p + o.bk, D, lc.k.data());
    linear(lc.a.data(), n, D, p + o.wv, p + o.bv, D, lc.v.data());
    lc.p.assign(NH * n * n, 0.0);
    lc.o.assign(n * D, 0.0);
    for (std::size_t h = 0; h < NH; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        double* row = lc.p.data() + (h * n + i) * n;
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t cc = h * dh; cc < (h + 1) * dh; ++cc) s += lc.q[i * D + cc] * lc.k[j * D + cc];
          row[j] = s * scale;
          mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          row[j] /= sum;
          for (std::size_t cc = h * dh; cc < (h + 1) * dh; ++cc) lc.o[i * D + cc] += row[j] * lc.v[j * D + cc];
        }
      }
    }
    std::vector<double> att(n * D);
    linear(lc.o.data(), n, D, p + o.wo, p + o.bo, D, att.data());
    for (std::size_t i = 0; i < n * D; ++i) x[i] += att[i];
    lc.x_mid = x;

    lc.xhat2.resize(n * D);
    lc.inv2.resize(n);
    lc.c.resize(n * D);
    layer_norm(x.data(), n, D, p + o.ln2_g, p + o.ln2_b, lc.xhat2.data(), lc.inv2.data(), lc.c.data());
    lc.f.resize(n * F);
    linear(lc.c.data(), n, D, p + o.w1, p + o.b1, F, lc.f.data());
    for (double& v : lc.f) v = std::tanh(v);
    std::vector<double> ff(n * D);
    linear(lc.f.data(), n, F, p + o.w2, p + o.b2, D, ff.data());
    for (std::size_t i = 0; i < n * D; ++i) x[i] += ff[i];
  }

  c.x_out = x;
  c.xhatf.resize(n * D);
  c.invf.resize(n);
  c.y.resize(n * D);
  layer_norm(x.data(), n, D, p + lay.lnf_g, p + lay.lnf_b, c.xhatf.data(), c.invf.data(), c.y.data());
  c.z.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = p[lay.b_head];
    for (std::size_t d = 0; d < D; ++d) z += c.y[i * D + d] * p[lay.w_head + d];
    c.z[i] = z;
  }
}

}  // namespace

std::size_t global_tx_count(const Hyper& h) { return Layout(h).end; }

void global_tx_init(const Hyper& h, Rng& rng, std::span<double> p) {
  const Layout lay(h);
  const std::size_t D = lay.D, F = lay.F;
  auto fill = [&](std::size_t at, std::size_t count, double stddev) {
    std::normal_distribution<double> nd(0.0, stddev);
    for (std::size_t i = 0; i < count; ++i) p[at + i] = nd(rng);
  };
  auto ones = [&](std::size_t at) { std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(at), D, 1.0); };
  const double sd = 1.0 / std::sqrt(static_cast<double>(D));
  fill(lay.w_in, kTokenInputs * D, 1.0 / std::sqrt(static_cast<double>(kTokenInputs)));
  fill(lay.pos, kSlots * D, 0.1);
  for (const LayerOffsets& o : lay.layer) {
    ones(o.ln1_g);
    ones(o.ln2_g);
    fill(o.wq, D * D, sd);
    fill(o.wk, D * D, sd);
    fill(o.wv, D * D, sd);
    fill(o.wo, D * D, sd);
    fill(o.w1, D * F, sd);
    fill(o.w2, F * D, 1.0 / std::sqrt(static_cast<double>(F)));
  }
  ones(lay.lnf_g);
  fill(lay.w_head, D, sd);
}

ActionVector global_tx_forward(const ControllerSpec& spec, const ObservationFrame& obs) {
  const Layout lay(spec.hyper);
  thread_local Cache c;
  forward_pass(spec, obs, lay, c);
  ActionVector out;
  for (std::size_t i = 0; i < c.slots.size(); ++i) out.values[static_cast<std::size_t>(c.slots[i])] = squash(c.z[i]);
  return out;
}

double global_tx_gradient(const ControllerSpec& spec, const ObservationFrame& obs, const ActionVector& target,
                          std::span<double> grad) {
  const Layout lay(spec.hyper);
  thread_local Cache c;
  forward_pass(spec, obs, lay, c);
  const double* p = spec.params.data();
  double* g = grad.data();
  const std::size_t n = c.slots.size();
  const std::size_t D = lay.D, F = lay.F, NH = lay.heads, dh = D / NH;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  double sse = 0.0;
  std::vector<double> dy(n * D, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = std::tanh(c.z[i]);
    const double err = squash(c.z[i]) - target.values[static_cast<std::size_t>(c.slots[i])];
    sse += err * err;
    const double dz = err * (1.0 - th * th);
    g[lay.b_head] += dz;
    for (std::size_t d = 0; d < D; ++d) {
      g[lay.w_head + d] += dz * c.y[i * D + d];
      dy[i * D + d] = dz * p[lay.w_head + d];
    }
  }

  std::vector<double> dx(n * D, 0.0);
  layer_norm_backward(c.xhatf.data(), c.invf.data(), n, D, p + lay.lnf_g, dy.data(), dx.data(), g + lay.lnf_g,
                      g + lay.lnf_b);

  for (std::size_t l = lay.L; l-- > 0;) {
    const LayerOffsets& o = lay.layer[l];
    const LayerCache& lc = c.layers[l];

    // feed-forward residual: x_out = x_mid + W2 tanh(W1 LN2(x_mid))
    std::vector<double> df(n * F, 0.0);
    linear_backward(lc.f.data(), n, F, p + o.w2, D, dx.data(), df.data(), g + o.w2, g + o.b2);
    for (std::size_t i = 0; i < n * F; ++i) df[i] *= 1.0 - lc.f[i] * lc.f[i];
    std::vector<double> dc(n * D, 0.0);
    linear_backward(lc.c.data(), n, D, p + o.w1, F, df.data(), dc.data(), g + o.w1, g + o.b1);
    layer_norm_backward(lc.xhat2.data(), lc.inv2.data(), n, D, p + o.ln2_g, dc.data(), dx.data(), g + o.ln2_g,
                        g + o.ln2_b);

    // attention residual: x_mid = x_in + Wo Attn(LN1(x_in))
    std::vector<double> dO(n * D, 0.0);
    linear_backward(lc.o.data(), n, D, p + o.wo, D, dx.data(), dO.data(), g + o.wo, g + o.bo);
    std::vector<double> dq(n * D, 0.0), dk(n * D, 0.0), dv(n * D, 0.0), dP(n);
    for (std::size_t h = 0; h < NH; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = lc.p.data() + (h * n + i) * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t cc = h * dh; cc < (h + 1) * dh; ++cc) {
            s += dO[i * D + cc] * lc.v[j * D + cc];
            dv[j * D + cc] += row[j] * dO[i * D + cc];
          }
          dP[j] = s;
          dot += row[j] * s;
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double ds = row[j] * (dP[j] - dot) * scale;
          if (ds == 0.0) continue;
          for (std::size_t cc = h * dh; cc < (h + 1) * dh; ++cc) {
            dq[i * D + cc] += ds * lc.k[j * D + cc];
            dk[j * D + cc] += ds * lc.q[i * D + cc];
          }
        }
      }
    }
    std::vector<double> da(n * D, 0.0);
    linear_backward(lc.a.data(), n, D, p + o.wq, D, dq.data(), da.data(), g + o.wq, g + o.bq);
    linear_backward(lc.a.data(), n, D, p + o.wk, D, dk.data(), da.data(), g + o.wk, g + o.bk);
    linear_backward(lc.a.data(), n, D, p + o.wv, D, dv.data(), da.data(), g + o.wv, g + o.bv);
    layer_norm_backward(lc.xhat1.data(), lc.inv1.data(), n, D, p + o.ln1_g, da.data(), dx.data(), g + o.ln1_g,
                        g + o.ln1_b);
  }

  for (std::size_t i = 0; i < n; ++i) {
    double* gp = g + lay.pos + static_cast<std::size_t>(c.slots[i]) * D;
    for (std::size_t d = 0; d < D; ++d) gp[d] += dx[i * D + d];
  }
  linear_backward(c.u.data(), n, kTokenInputs, p + lay.w_in, D, dx.data(), nullptr, g + lay.w_in, g + lay.b_in);
  return sse;
}

}  // namespace voxdistill::detail
