#pragma once

#include <cstdint>
#include <vector>

#include "voxdistill/controllers.hpp"
#include "voxdistill/morphology.hpp"
#include "voxdistill/physics.hpp"

namespace voxdistill {

/// Fitness assigned to episodes that blew up numerically.
inline constexpr double kFitnessFloor = 0.0;

struct StepRecord {
  ObservationFrame obs;  // as seen by the controller (noisy)
  ActionVector action;   // as emitted, before actuator noise
};

struct EpisodeResult {
  double fitness = 0.0;
  double displacement = 0.0;  // centre-of-mass delta x
  bool success = false;       // rightmost mass crossed the terrain end
  int finish_step = -1;
  bool failed = false;  // numerical blowup; fitness is the floor
  std::uint64_t clamped_actions = 0;
  std::vector<StepRecord> records;
};

/// Rolls out one episode. Reward is the centre-of-mass displacement plus a
/// speed bonus (steps left / episode steps) x terrain length on finishing.
EpisodeResult run_episode(const MorphologyGrid& grid, const ControllerSpec& controller, const WorldConfig& world,
                          const NoiseConfig& noise, bool record = false);

/// How individuals are scored: world, noise levels, repetitions, and how
/// many episodes may run at once.
struct EvalSettings {
  WorldConfig world;
  double obs_noise_std = 0.01;
  double act_noise_std = 0.01;
  int reps = 5;
  int workers = 1;
};

struct FitnessEstimate {
  double mean = 0.0;
  std::vector<double> raws;
};

/// `reps` noisy episodes with seeds derive_seed(seed, rep). Blown-up
/// episodes count as floor fitness.
FitnessEstimate evaluate(const MorphologyGrid& grid, const ControllerSpec& controller, const EvalSettings& settings,
                         std::uint64_t seed);
FitnessEstimate evaluate(const MorphologyGrid& grid, const ControllerSpec& controller, const WorldConfig& world,
                         int reps, std::uint64_t seed);

}  // namespace voxdistill
