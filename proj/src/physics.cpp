#include "voxdistill/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace voxdistill {

namespace {

constexpr double kBridgeNodeMass = 1.0;
constexpr double kBridgeNodeDamping = 4.0;
constexpr int kDampingMaxIterations = 8;
constexpr int kLattice = kGridW + 1;

int lattice_index(int lr, int lc) { return lr * kLattice + lc; }

}  // namespace

void WorldConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("world.dt must be > 0");
  if (episode_steps <= 0) throw ConfigError("world.episode_steps must be > 0");
  if (substeps_per_control < 1) throw ConfigError("world.substeps_per_control must be >= 1");
  if (terrain.length_voxels <= 0) throw ConfigError("terrain.length must be > 0");
  if (voxel_mass <= 0.0 || elastic_stiffness <= 0.0) throw ConfigError("mass and stiffness must be positive");
  if (friction_coeff < 0.0 || damping_ratio < 0.0) throw ConfigError("friction and damping must be non-negative");
  if (terrain.kind == TerrainKind::Bridge &&
      !(terrain.bridge_anchor_positions.second > terrain.bridge_anchor_positions.first + 1.0)) {
    throw ConfigError("bridge anchors must be ordered and at least 2 voxels apart");
  }
}

double time_signal(int timestep) {
  return static_cast<double>(timestep % kTimeSignalPeriod) / static_cast<double>(kTimeSignalPeriod);
}

TerrainState TerrainState::make(const TerrainSpec& spec) {
  TerrainState t;
  if (spec.kind != TerrainKind::Bridge) return t;
  const auto [left, right] = spec.bridge_anchor_positions;
  const int segments = std::max(2, static_cast<int>(std::lround(right - left)));
  t.x0 = left;
  t.node_y.assign(static_cast<std::size_t>(segments + 1), 0.0);
  t.node_vy.assign(static_cast<std::size_t>(segments + 1), 0.0);
  return t;
}

double TerrainState::surface(double x, int& index, double& weight) const {
  index = -1;
  weight = 0.0;
  if (node_y.empty()) return 0.0;
  const double u = x - x0;
  const double last = static_cast<double>(node_y.size() - 1);
  if (u <= 0.0 || u >= last) return 0.0;
  const double fl = std::floor(u);
  index = static_cast<int>(fl);
  weight = u - fl;
  const auto i = static_cast<std::size_t>(index);
  return (1.0 - weight) * node_y[i] + weight * node_y[i + 1];
}

SoftBody build_body(const MorphologyGrid& grid, const WorldConfig& world) {
  int occupied = 0;
  for (int s = 0; s < kSlots; ++s) occupied += grid.occupied(s);
  if (occupied == 0) throw EmptyMorphology("morphology has no voxels");
  if (!is_connected(grid)) throw DisconnectedMorphology("morphology is not 4-connected");

  SoftBody body;
  body.grid = grid;

  std::array<double, kLattice * kLattice> corner_mass{};
  int min_lc = kLattice;
  int max_lr = -1;
  for (int r = 0; r < kGridH; ++r) {
    for (int c = 0; c < kGridW; ++c) {
      if (grid.at(r, c) == Material::Empty) continue;
      for (int k = 0; k < 4; ++k) {
        const int lr = r + (k >= 2 ? 1 : 0);
        const int lc = c + ((k == 1 || k == 2) ? 1 : 0);
        corner_mass[static_cast<std::size_t>(lattice_index(lr, lc))] += 0.25 * world.voxel_mass;
        min_lc = std::min(min_lc, lc);
        max_lr = std::max(max_lr, lr);
      }
    }
  }

  std::array<int, kLattice * kLattice> mass_of{};
  mass_of.fill(-1);
  for (int lr = 0; lr < kLattice; ++lr) {
    for (int lc = 0; lc < kLattice; ++lc) {
      const double m = corner_mass[static_cast<std::size_t>(lattice_index(lr, lc))];
      if (m <= 0.0) continue;
      mass_of[static_cast<std::size_t>(lattice_index(lr, lc))] = static_cast<int>(body.masses.size());
      PointMass p;
      p.pos = {world.start_x + static_cast<double>(lc - min_lc), static_cast<double>(max_lr - lr)};
      p.inv_mass = 1.0 / m;
      body.masses.push_back(p);
    }
  }

  const double k_elastic = world.elastic_stiffness;
  const double k_rigid = world.elastic_stiffness * world.rigid_stiffness_factor;
  auto add_spring = [&](int a, int b, double rest, double k, ActuatedAxis axis, int owner) {
    Spring sp;
    sp.a = static_cast<std::uint32_t>(a);
    sp.b = static_cast<std::uint32_t>(b);
    sp.nominal_rest = rest;
    sp.rest = rest;
    sp.stiffness = k;
    const double ia = body.masses[static_cast<std::size_t>(a)].inv_mass;
    const double ib = body.masses[static_cast<std::size_t>(b)].inv_mass;
    const double reduced = 1.0 / (ia + ib);
    sp.damping = 2.0 * world.damping_ratio * std::sqrt(k * reduced);
    sp.axis = axis;
    sp.owner_voxel = owner;
    body.springs.push_back(sp);
  };

  for (int r = 0; r < kGridH; ++r) {
    for (int c = 0; c < kGridW; ++c) {
      const int slot = r * kGridW + c;
      const Material m = grid.at(r, c);
      auto& corners = body.voxel_index[static_cast<std::size_t>(slot)];
      if (m == Material::Empty) {
        corners.fill(-1);
        body.rest_area[static_cast<std::size_t>(slot)] = 0.0;
        continue;
      }
      const int tl = mass_of[static_cast<std::size_t>(lattice_index(r, c))];
      const int tr = mass_of[static_cast<std::size_t>(lattice_index(r, c + 1))];
      const int br = mass_of[static_cast<std::size_t>(lattice_index(r + 1, c + 1))];
      const int bl = mass_of[static_cast<std::size_t>(lattice_index(r + 1, c))];
      corners = {tl, tr, br, bl};
      body.rest_area[static_cast<std::size_t>(slot)] = 1.0;

      const double k = m == Material::Rigid ? k_rigid : k_elastic;
      const ActuatedAxis h = m == Material::HorizontalActuator ? ActuatedAxis::Horizontal : ActuatedAxis::None;
      const ActuatedAxis v = m == Material::VerticalActuator ? ActuatedAxis::Vertical : ActuatedAxis::None;
      add_spring(tl, tr, 1.0, k, h, slot);
      add_spring(bl, br, 1.0, k, h, slot);
      add_spring(tl, bl, 1.0, k, v, slot);
      add_spring(tr, br, 1.0, k, v, slot);
      add_spring(tl, br, std::sqrt(2.0), k, ActuatedAxis::None, slot);
      add_spring(tr, bl, std::sqrt(2.0), k, ActuatedAxis::None, slot);
    }
  }

  return body;
}

void apply_actions(SoftBody& body, const ActionVector& actions, double act_noise_std, Rng* noise_rng) {
  std::array<double, kSlots> applied{};
  std::normal_distribution<double> noise(0.0, act_noise_std > 0.0 ? act_noise_std : 1.0);
  for (int s = 0; s < kSlots; ++s) {
    const auto i = static_cast<std::size_t>(s);
    if (!is_actuator(body.grid.cells[i])) continue;
    double a = actions.values[i];
    if (act_noise_std > 0.0 && noise_rng != nullptr) a += noise(*noise_rng);
    if (!(a >= kActionMin && a <= kActionMax)) {
      ++body.clamped_actions;
      a = std::isnan(a) ? 1.0 : std::clamp(a, kActionMin, kActionMax);
    }
    applied[i] = a;
  }
  for (Spring& sp : body.springs) {
    if (sp.axis == ActuatedAxis::None) continue;
    sp.rest = applied[static_cast<std::size_t>(sp.owner_voxel)] * sp.nominal_rest;
  }
}

namespace {

// Implicit spring damping: solves (M + dt C) v' = M v by conjugate gradients
// preconditioned with M^-1. Every search direction then carries zero net
// momentum, so linear momentum is preserved at any iteration count.
void damp_springs(SoftBody& body, double dt) {
  const std::size_t n = body.masses.size();
  const std::vector<Vec2>& dirs = body.spring_dir;
  // y = dt C x
  auto apply_c = [&](const std::vector<Vec2>& x, std::vector<Vec2>& y) {
    y.assign(n, Vec2{});
    for (std::size_t k = 0; k < body.springs.size(); ++k) {
      const Vec2 u = dirs[k];
      const Spring& sp = body.springs[k];
      const Vec2 dv = x[sp.b] - x[sp.a];
      const Vec2 f = u * (sp.damping * dt * (dv.x * u.x + dv.y * u.y));
      y[sp.a] -= f;
      y[sp.b] += f;
    }
  };
  auto dot = [&](const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i].x * b[i].x + a[i].y * b[i].y;
    return acc;
  };

  auto& [x, r, z, p, ap] = body.cg_buffers;
  x.resize(n);
  z.resize(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = body.masses[i].vel;
  // r = M v - (M + dt C) v = -dt C v
  apply_c(x, r);
  for (Vec2& e : r) e = e * -1.0;
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] * body.masses[i].inv_mass;
  p.assign(z.begin(), z.end());
  double rz = dot(r, z);
  const double tol = 1e-24 * std::max(1.0, dot(x, x));
  for (int it = 0; it < kDampingMaxIterations && rz > tol; ++it) {
    apply_c(p, ap);
    for (std::size_t i = 0; i < n; ++i) ap[i] += p[i] * (1.0 / body.masses[i].inv_mass);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += p[i] * alpha;
      r[i] -= ap[i] * alpha;
      z[i] = r[i] * body.masses[i].inv_mass;
    }
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + p[i] * beta;
  }
  for (std::size_t i = 0; i < n; ++i) body.masses[i].vel = x[i];
}

}  // namespace

void step(SoftBody& body, TerrainState& terrain, const WorldConfig& world) {
  const std::size_t n = body.masses.size();
  const double dt = world.dt;
  std::vector<Vec2>& force = body.force_buffer;
  force.resize(n);
  for (std::size_t i = 0; i < n; ++i) force[i] = {0.0, -world.gravity / body.masses[i].inv_mass};

  body.spring_dir.resize(body.springs.size());
  for (std::size_t k = 0; k < body.springs.size(); ++k) {
    const Spring& sp = body.springs[k];
    const Vec2 d = body.masses[sp.b].pos - body.masses[sp.a].pos;
    const double len = std::sqrt(d.x * d.x + d.y * d.y);
    if (len < 1e-12) {
      body.spring_dir[k] = {};
      continue;
    }
    body.spring_dir[k] = d * (1.0 / len);
    const Vec2 f = d * (sp.stiffness * (len - sp.rest) / len);
    force[sp.a] += f;
    force[sp.b] -= f;
  }

  const bool bridge = !terrain.node_y.empty();
  std::vector<double> node_force;
  if (bridge) node_force.assign(terrain.node_y.size(), 0.0);

  // Penetration-proportional contact force; 0 for masses not in contact.
  std::vector<double>& normal = body.normal_buffer;
  normal.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    int seg = -1;
    double w = 0.0;
    const double pen = terrain.surface(body.masses[i].pos.x, seg, w) - body.masses[i].pos.y;
    if (pen > 0.0) normal[i] = world.ground_stiffness * pen;
  }

  for (std::size_t i = 0; i < n; ++i) {
    PointMass& p = body.masses[i];
    p.vel += (force[i] + Vec2{0.0, normal[i]}) * (p.inv_mass * dt);
  }

  damp_springs(body, dt);

  for (std::size_t i = 0; i < n; ++i) {
    if (normal[i] <= 0.0) continue;
    PointMass& p = body.masses[i];
    int seg = -1;
    double w = 0.0;
    terrain.surface(p.pos.x, seg, w);
    double surface_vy = 0.0;
    if (seg >= 0) {
      const auto s = static_cast<std::size_t>(seg);
      surface_vy = (1.0 - w) * terrain.node_vy[s] + w * terrain.node_vy[s + 1];
    }
    // Implicit normal damping; the total contact impulse may not pull.
    const double gamma = world.ground_damping * dt * p.inv_mass;
    const double rel = p.vel.y - surface_vy;
    const double elastic_dv = normal[i] * dt * p.inv_mass;
    const double damping_dv = std::max(-rel * gamma / (1.0 + gamma), -elastic_dv);
    p.vel.y += damping_dv;
    const double n_force = (elastic_dv + damping_dv) / (dt * p.inv_mass);
    normal[i] = n_force;
    if (seg >= 0) {
      const auto s = static_cast<std::size_t>(seg);
      node_force[s] -= (1.0 - w) * n_force;
      node_force[s + 1] -= w * n_force;
    }
    // Coulomb friction as a velocity-level impulse capped by mu * N * dt.
    const double cap = world.friction_coeff * n_force * dt * p.inv_mass;
    if (std::abs(p.vel.x) <= cap) {
      p.vel.x = 0.0;
    } else {
      p.vel.x -= std::copysign(cap, p.vel.x);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    PointMass& p = body.masses[i];
    p.pos += p.vel * dt;
    if (!(std::abs(p.pos.x) < world.blowup_bound && std::abs(p.pos.y) < world.blowup_bound)) {
      throw NumericalBlowup("mass coordinate exceeded bound; dt/stiffness pairing is unstable");
    }
  }

  if (bridge) {
    const double k = world.terrain.bridge_segment_stiffness;
    const std::size_t last = terrain.node_y.size() - 1;
    for (std::size_t j = 1; j < last; ++j) {
      const double lap = terrain.node_y[j - 1] - 2.0 * terrain.node_y[j] + terrain.node_y[j + 1];
      const double f = k * lap - kBridgeNodeDamping * terrain.node_vy[j] + node_force[j];
      terrain.node_vy[j] += f / kBridgeNodeMass * dt;
    }
    for (std::size_t j = 1; j < last; ++j) {
      terrain.node_y[j] += terrain.node_vy[j] * dt;
      if (!(std::abs(terrain.node_y[j]) < world.blowup_bound)) {
        throw NumericalBlowup("bridge node exceeded bound");
      }
    }
  }
}

double voxel_area(const SoftBody& body, int slot) {
  const auto& c = body.voxel_index[static_cast<std::size_t>(slot)];
  if (c[0] < 0) return 0.0;
  double twice = 0.0;
  for (int k = 0; k < 4; ++k) {
    const Vec2 p = body.masses[static_cast<std::size_t>(c[static_cast<std::size_t>(k)])].pos;
    const Vec2 q = body.masses[static_cast<std::size_t>(c[static_cast<std::size_t>((k + 1) % 4)])].pos;
    twice += p.x * q.y - q.x * p.y;
  }
  // corners run clockwise, so the signed area is negative
  return -0.5 * twice;
}

ObservationFrame observe(const SoftBody& body, int timestep, double obs_noise_std, Rng* noise_rng) {
  ObservationFrame obs;
  obs.time_signal = time_signal(timestep);
  const bool noisy = obs_noise_std > 0.0 && noise_rng != nullptr;
  std::normal_distribution<double> noise(0.0, noisy ? obs_noise_std : 1.0);
  for (int s = 0; s < kSlots; ++s) {
    const auto i = static_cast<std::size_t>(s);
    const Material m = body.grid.cells[i];
    if (m == Material::Empty) continue;
    obs.valid_mask[i] = true;
    double* f = obs.slot(s);
    f[0] = voxel_area(body, s) / body.rest_area[i];
    Vec2 v;
    for (int corner : body.voxel_index[i]) v += body.masses[static_cast<std::size_t>(corner)].vel;
    f[1] = 0.25 * v.x;
    f[2] = 0.25 * v.y;
    if (noisy) {
      f[0] += noise(*noise_rng);
      f[1] += noise(*noise_rng);
      f[2] += noise(*noise_rng);
    }
    f[3 + static_cast<int>(m)] = 1.0;
  }
  return obs;
}

Vec2 center_of_mass(const SoftBody& body) {
  Vec2 acc;
  double total = 0.0;
  for (const PointMass& p : body.masses) {
    const double m = 1.0 / p.inv_mass;
    acc += p.pos * m;
    total += m;
  }
  return acc * (1.0 / total);
}

Vec2 total_momentum(const SoftBody& body) {
  Vec2 acc;
  for (const PointMass& p : body.masses) acc += p.vel * (1.0 / p.inv_mass);
  return acc;
}

}  // namespace voxdistill
