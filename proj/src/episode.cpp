#include "voxdistill/episode.hpp"

#include <algorithm>

#include "voxdistill/parallel.hpp"

namespace voxdistill {

EpisodeResult run_episode(const MorphologyGrid& grid, const ControllerSpec& controller, const WorldConfig& world,
                          const NoiseConfig& noise, bool record) {
  world.validate();
  SoftBody body = build_body(grid, world);
  TerrainState terrain = TerrainState::make(world.terrain);
  Rng rng(noise.seed);

  EpisodeResult result;
  if (record) result.records.reserve(static_cast<std::size_t>(world.episode_steps / world.substeps_per_control + 1));
  const double start_com = center_of_mass(body).x;
  const double finish_x = static_cast<double>(world.terrain.length_voxels);

  try {
    for (int t = 0; t < world.episode_steps; ++t) {
      if (t % world.substeps_per_control == 0) {
        ObservationFrame obs = observe(body, t, noise.obs_noise_std, &rng);
        ActionVector action = forward(controller, obs);
        apply_actions(body, action, noise.act_noise_std, &rng);
        if (record) result.records.push_back({std::move(obs), action});
      }
      step(body, terrain, world);
      double rightmost = body.masses.front().pos.x;
      for (const PointMass& p : body.masses) rightmost = std::max(rightmost, p.pos.x);
      if (rightmost >= finish_x) {
        result.success = true;
        result.finish_step = t + 1;
        break;
      }
    }
  } catch (const NumericalBlowup&) {
    result.failed = true;
    result.fitness = kFitnessFloor;
    result.clamped_actions = body.clamped_actions;
    return result;
  }

  result.displacement = center_of_mass(body).x - start_com;
  result.fitness = result.displacement;
  if (result.success) {
    result.fitness += static_cast<double>(world.episode_steps - result.finish_step) /
                      static_cast<double>(world.episode_steps) * finish_x;
  }
  result.clamped_actions = body.clamped_actions;
  return result;
}

FitnessEstimate evaluate(const MorphologyGrid& grid, const ControllerSpec& controller, const EvalSettings& settings,
                         std::uint64_t seed) {
  if (settings.reps < 1) throw ConfigError("reps must be at least 1");
  FitnessEstimate out;
  out.raws.resize(static_cast<std::size_t>(settings.reps));
  parallel_for(out.raws.size(), settings.workers, [&](std::size_t rep) {
    const NoiseConfig noise{settings.obs_noise_std, settings.act_noise_std, derive_seed(seed, rep)};
    out.raws[rep] = run_episode(grid, controller, settings.world, noise).fitness;
  });
  double sum = 0.0;
  for (double r : out.raws) sum += r;
  out.mean = sum / static_cast<double>(out.raws.size());
  return out;
}

FitnessEstimate evaluate(const MorphologyGrid& grid, const ControllerSpec& controller, const WorldConfig& world,
                         int reps, std::uint64_t seed) {
  EvalSettings settings;
  settings.world = world;
  settings.reps = reps;
  return evaluate(grid, controller, settings, seed);
}

}  // namespace voxdistill
