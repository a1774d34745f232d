#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "voxdistill/common.hpp"
#include "voxdistill/morphology.hpp"

namespace voxdistill {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

enum class TerrainKind : std::uint8_t { Flat, Bridge };

struct TerrainSpec {
  TerrainKind kind = TerrainKind::Flat;
  int length_voxels = 100;
  // Bridge only: a vertically deflecting chain of unit segments between the anchors.
  double bridge_segment_stiffness = 2000.0;
  std::pair<double, double> bridge_anchor_positions{8.0, 40.0};
};

struct WorldConfig {
  double gravity = 9.81;
  double dt = 0.01;
  int substeps_per_control = 5;
  int episode_steps = 500;
  TerrainSpec terrain;
  double friction_coeff = 0.8;
  double ground_stiffness = 1500.0;
  double damping_ratio = 1.0;

  double voxel_mass = 1.0;
  double elastic_stiffness = 300.0;
  double rigid_stiffness_factor = 10.0;
  double ground_damping = 20.0;
  // x-coordinate of the leftmost mass at the start of an episode
  double start_x = 2.0;
  double blowup_bound = 1.0e4;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

struct NoiseConfig {
  double obs_noise_std = 0.01;
  double act_noise_std = 0.01;
  std::uint64_t seed = 0;

  static NoiseConfig disabled(std::uint64_t seed = 0) { return {0.0, 0.0, seed}; }
};

enum class ActuatedAxis : std::uint8_t { None, Horizontal, Vertical };

struct PointMass {
  Vec2 pos;
  Vec2 vel;
  double inv_mass = 0.0;
};

struct Spring {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double nominal_rest = 1.0;
  double rest = 1.0;  // current target length
  double stiffness = 0.0;
  double damping = 0.0;
  ActuatedAxis axis = ActuatedAxis::None;
  int owner_voxel = -1;
};

/// Corner order per voxel: top-left, top-right, bottom-right, bottom-left.
using VoxelCorners = std::array<int, 4>;

struct SoftBody {
  MorphologyGrid grid;
  std::vector<PointMass> masses;
  std::vector<Spring> springs;
  std::array<VoxelCorners, kSlots> voxel_index{};  // -1 entries for empty cells
  std::array<double, kSlots> rest_area{};
  // number of action entries clamped into range so far
  std::uint64_t clamped_actions = 0;

  // step() scratch space
  std::vector<Vec2> force_buffer;
  std::vector<Vec2> impulse_buffer;
  std::vector<double> normal_buffer;
  std::vector<Vec2> spring_dir;
  std::array<std::vector<Vec2>, 5> cg_buffers;
};

/// Dynamic part of the terrain. Empty for flat ground.
struct TerrainState {
  std::vector<double> node_y;
  std::vector<double> node_vy;
  double x0 = 0.0;  // x of the first (pinned) node

  static TerrainState make(const TerrainSpec& spec);
  /// Surface height at x together with the interpolation weight into
  /// node `index` / `index + 1`; index < 0 means rigid ground.
  double surface(double x, int& index, double& weight) const;
};

/// Per-voxel scalar actions, row-major. Entries for non-actuators are ignored.
struct ActionVector {
  std::array<double, kSlots> values{};
  friend bool operator==(const ActionVector&, const ActionVector&) = default;
};

struct ObservationFrame {
  // 8 features per slot: volume, speed x, speed y, material one-hot (5)
  std::array<double, kSlots * kSlotFeatures> per_voxel{};
  double time_signal = 0.0;
  std::array<bool, kSlots> valid_mask{};

  const double* slot(int s) const { return per_voxel.data() + s * kSlotFeatures; }
  double* slot(int s) { return per_voxel.data() + s * kSlotFeatures; }
  friend bool operator==(const ObservationFrame&, const ObservationFrame&) = default;
};

/// Period of the saw-wave time signal, in timesteps.
inline constexpr int kTimeSignalPeriod = 25;

double time_signal(int timestep);

/// Throws EmptyMorphology / DisconnectedMorphology for invalid grids.
SoftBody build_body(const MorphologyGrid& grid, const WorldConfig& world);

/// Sets actuated springs' target length to clamp(action + noise) x nominal.
/// `noise_rng` may be null when the actuator noise std is zero.
void apply_actions(SoftBody& body, const ActionVector& actions, double act_noise_std = 0.0,
                   Rng* noise_rng = nullptr);

/// One semi-implicit Euler timestep: elastic, gravity and contact penalty
/// forces update velocities, spring damping is solved implicitly, contact
/// damping and Coulomb friction act as velocity-level impulses, then
/// positions advance. Throws NumericalBlowup.
void step(SoftBody& body, TerrainState& terrain, const WorldConfig& world);

ObservationFrame observe(const SoftBody& body, int timestep, double obs_noise_std = 0.0,
                         Rng* noise_rng = nullptr);

Vec2 center_of_mass(const SoftBody& body);
Vec2 total_momentum(const SoftBody& body);
double voxel_area(const SoftBody& body, int slot);

}  // namespace voxdistill
