#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "voxdistill/controllers.hpp"
#include "voxdistill/physics.hpp"
#include "voxdistill/stats.hpp"

namespace voxdistill::testing {

inline MorphologyGrid mirror(const MorphologyGrid& g) {
  MorphologyGrid out;
  for (int r = 0; r < kGridH; ++r) {
    for (int c = 0; c < kGridW; ++c) out.at(r, kGridW - 1 - c) = g.at(r, c);
  }
  return out;
}

inline ActionVector mirror(const ActionVector& a) {
  ActionVector out;
  for (int r = 0; r < kGridH; ++r) {
    for (int c = 0; c < kGridW; ++c) {
      out.values[static_cast<std::size_t>(r * kGridW + kGridW - 1 - c)] =
          a.values[static_cast<std::size_t>(r * kGridW + c)];
    }
  }
  return out;
}

inline double total_mass(const SoftBody& body) {
  double m = 0.0;
  for (const PointMass& p : body.masses) m += 1.0 / p.inv_mass;
  return m;
}

/// Largest change of total linear momentum over `steps` steps with gravity
/// and friction off, starting from a randomly perturbed shape lifted clear
/// of the ground and given a random drift velocity.
inline double momentum_drift(const MorphologyGrid& grid, int steps, std::uint64_t seed) {
  WorldConfig world;
  world.gravity = 0.0;
  world.friction_coeff = 0.0;
  SoftBody body = build_body(grid, world);
  TerrainState terrain = TerrainState::make(world.terrain);
  Rng rng(seed);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (PointMass& p : body.masses) {
    p.pos += Vec2{jitter(rng), 20.0 + jitter(rng)};
    p.vel = Vec2{0.3 + jitter(rng), jitter(rng)};
  }
  const Vec2 start = total_momentum(body);
  double worst = 0.0;
  for (int t = 0; t < steps; ++t) {
    step(body, terrain, world);
    const Vec2 now = total_momentum(body);
    worst = std::max({worst, std::abs(now.x - start.x), std::abs(now.y - start.y)});
  }
  return worst;
}

/// Centre-of-mass speed after resting on flat ground with all actions 1.0.
inline double settled_speed(const MorphologyGrid& grid, int steps) {
  WorldConfig world;
  SoftBody body = build_body(grid, world);
  TerrainState terrain = TerrainState::make(world.terrain);
  ActionVector ones;
  ones.values.fill(1.0);
  apply_actions(body, ones);
  for (int t = 0; t < steps; ++t) step(body, terrain, world);
  const Vec2 p = total_momentum(body);
  return std::hypot(p.x, p.y) / total_mass(body);
}

/// Rolls a left-right symmetric body and its mirror image under mirrored
/// random action sequences and returns the largest position mismatch.
inline double mirror_deviation(const MorphologyGrid& grid, int steps, std::uint64_t seed) {
  WorldConfig world;
  SoftBody a = build_body(grid, world);
  SoftBody b = build_body(mirror(grid), world);
  TerrainState ta = TerrainState::make(world.terrain);
  TerrainState tb = TerrainState::make(world.terrain);

  double lo = a.masses.front().pos.x;
  double hi = lo;
  for (const PointMass& p : a.masses) {
    lo = std::min(lo, p.pos.x);
    hi = std::max(hi, p.pos.x);
  }
  const double axis_sum = lo + hi;
  std::vector<std::size_t> partner(a.masses.size());
  for (std::size_t i = 0; i < a.masses.size(); ++i) {
    const Vec2 want{axis_sum - a.masses[i].pos.x, a.masses[i].pos.y};
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t j = 0; j < b.masses.size(); ++j) {
      const Vec2 d = b.masses[j].pos - want;
      const double dd = d.x * d.x + d.y * d.y;
      if (dd < best_d) {
        best_d = dd;
        best = j;
      }
    }
    partner[i] = best;
  }

  Rng rng(seed);
  std::uniform_real_distribution<double> act(kActionMin, kActionMax);
  double worst = 0.0;
  ActionVector actions;
  for (int t = 0; t < steps; ++t) {
    if (t % world.substeps_per_control == 0) {
      for (double& v : actions.values) v = act(rng);
      apply_actions(a, actions);
      apply_actions(b, mirror(actions));
    }
    step(a, ta, world);
    step(b, tb, world);
    for (std::size_t i = 0; i < a.masses.size(); ++i) {
      const Vec2 pa = a.masses[i].pos;
      const Vec2 pb = b.masses[partner[i]].pos;
      worst = std::max({worst, std::abs(pa.x - (axis_sum - pb.x)), std::abs(pa.y - pb.y)});
    }
  }
  return worst;
}

inline ObservationFrame random_frame(const MorphologyGrid& grid, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  ObservationFrame obs;
  std::uniform_int_distribution<int> tick(0, 499);
  obs.time_signal = time_signal(tick(rng));
  for (int s = 0; s < kSlots; ++s) {
    if (!grid.occupied(s)) continue;
    obs.valid_mask[static_cast<std::size_t>(s)] = true;
    double* f = obs.slot(s);
    f[0] = 1.0 + 0.2 * g(rng);
    f[1] = g(rng);
    f[2] = g(rng);
    f[3 + static_cast<int>(grid.cells[static_cast<std::size_t>(s)])] = 1.0;
  }
  return obs;
}

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, tiny)
/// of the squared-error gradient over a subset of coordinates, using central
/// differences with the given step.
inline double gradient_error(const ControllerSpec& spec, const ObservationFrame& obs, const ActionVector& target,
                             const std::vector<std::size_t>& coords, double h = 1e-5) {
  std::vector<double> grad(spec.params.size(), 0.0);
  accumulate_gradient(spec, obs, target, grad);
  ControllerSpec probe = spec;
  double diff = 0.0;
  double na = 0.0;
  double nn = 0.0;
  for (std::size_t i : coords) {
    const double saved = probe.params[i];
    probe.params[i] = saved + h;
    const double up = squared_error(probe, obs, target);
    probe.params[i] = saved - h;
    const double down = squared_error(probe, obs, target);
    probe.params[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    diff += (grad[i] - numeric) * (grad[i] - numeric);
    na += grad[i] * grad[i];
    nn += numeric * numeric;
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

inline std::vector<std::size_t> sample_coords(std::size_t n, std::size_t k, Rng& rng) {
  if (k >= n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  std::vector<std::size_t> out;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (out.size() < k) {
    const std::size_t i = pick(rng);
    if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
  }
  return out;
}

inline std::vector<double> midranks(const std::vector<double>& pooled) {
  std::vector<std::size_t> order(pooled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> rank(pooled.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return rank;
}

// Brute force over every way of labelling n of the pooled values as `a`.
inline double enumerated_rank_sum_p(const std::vector<double>& a, const std::vector<double>& b, Alternative alt) {
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> rank = midranks(pooled);
  const std::size_t N = pooled.size();
  const std::size_t n = a.size();
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) observed += rank[i];
  const double centre = n * (N + 1) / 2.0;
  long total = 0;
  long hits = 0;
  for (unsigned mask = 0; mask < (1u << N); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != n) continue;
    double w = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      if (mask & (1u << i)) w += rank[i];
    }
    ++total;
    const double tol = 1e-9;
    bool extreme = false;
    switch (alt) {
      case Alternative::Greater: extreme = w >= observed - tol; break;
      case Alternative::Less: extreme = w <= observed + tol; break;
      case Alternative::TwoSided: extreme = std::abs(w - centre) >= std::abs(observed - centre) - tol; break;
    }
    hits += extreme ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}


}  // namespace voxdistill::testing
