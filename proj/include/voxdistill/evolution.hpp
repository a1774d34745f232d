#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "voxdistill/controllers.hpp"
#include "voxdistill/episode.hpp"
#include "voxdistill/morphology.hpp"

namespace voxdistill {

struct Individual {
  MorphologyGrid grid;
  ControllerSpec controller;
  double fitness = 0.0;
  // Joint runs: mean fitness per morphology, in the order given to afpo_run.
  std::vector<double> per_morphology;
  int age = 0;
  std::uint64_t id = 0;
  std::uint64_t parent_id = 0;  // 0 for individuals without a parent
};

enum class FitnessMode : std::uint8_t { Single, JointMin };

struct AfpoConfig {
  int pop_size = 16;
  int generations = 300;
  FitnessMode fitness_mode = FitnessMode::Single;
  Arch arch = Arch::GlobalFC;
  Hyper hyper;
  double param_mutation_std = kParamMutationStd;

  void validate() const;
};

struct AfpoResult {
  Individual champion;  // best ever evaluated
  // trajectory[g] = best-ever fitness after generation g; g = 0 is the
  // initial population.
  std::vector<double> trajectory;
};

using AfpoCallback = std::function<void(int generation, const std::vector<Individual>& population)>;

/// Age-fitness Pareto optimisation of a controller on fixed bodies. With
/// `warm_start` the whole initial population is a copy of that controller.
AfpoResult afpo_run(const AfpoConfig& config, const std::vector<MorphologyGrid>& morphologies,
                    const EvalSettings& eval, std::uint64_t seed, const ControllerSpec* warm_start = nullptr,
                    const AfpoCallback& on_generation = {});

/// Pareto-ranked truncation: sorts by the number of individuals dominating
/// each one in (lower age, higher fitness), then fitness, and keeps `keep`.
std::vector<Individual> afpo_select(std::vector<Individual> pool, int keep);

// Archive cells cover n_voxels 1..25 x n_active 0..25.
inline constexpr int kActiveBins = kSlots + 1;
inline constexpr int kArchiveCells = kSlots * kActiveBins;

int cell_index(const Descriptor& d);
Descriptor cell_descriptor(int cell);

struct GenerationLog {
  int generation = 0;
  std::size_t occupancy = 0;
  double best = 0.0;
  double qd_score = 0.0;  // sum of occupant fitness
  std::uint64_t migrations = 0;  // cumulative
  int insertions = 0;
};

struct MapElitesConfig {
  int generations = 2000;
  int batch = 16;
  int initial = 16;
  Arch arch = Arch::GlobalFC;
  Hyper hyper;
  double morph_mutation_rate = kMorphologyMutationRate;
  double param_mutation_std = kParamMutationStd;

  void validate() const;
};

struct EliteArchive {
  std::map<int, Individual> cells;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  int generation = -1;  // last completed generation; 0 = initialised
  std::uint64_t migrations = 0;
  std::uint64_t next_id = 1;
  std::vector<GenerationLog> log;

  std::size_t occupancy() const { return cells.size(); }
  /// Inserts iff the cell is empty or the fitness is strictly greater.
  bool try_insert(const Individual& ind);
  /// Throws EmptyArchive.
  const Individual& best() const;
  bool contains_grid(const MorphologyGrid& grid) const;
  double qd_score() const;
};

using MapElitesCallback = std::function<void(const EliteArchive&, const GenerationLog&)>;

/// Runs (or resumes) MAP-Elites until config.generations is reached. A
/// resumed run produces the same archive as an uninterrupted one.
EliteArchive map_elites_run(const MapElitesConfig& config, const EvalSettings& eval, std::uint64_t seed,
                            const EliteArchive* resume = nullptr, const MapElitesCallback& on_generation = {});

/// Best ceil(fraction x occupancy) occupants by fitness; ties go to the
/// lower cell index. Throws EmptyArchive / ConfigError.
std::vector<Individual> select_teachers_topk(const EliteArchive& archive, double fraction);

/// Greedy farthest-point selection in (n_voxels, n_active) space starting
/// from the best occupant. Throws EmptyArchive / ConfigError.
std::vector<Individual> select_teachers_spread(const EliteArchive& archive, int k);

/// Intermediate bodies on the walk from a to b that are not in the archive.
std::vector<MorphologyGrid> unseen_path(const EliteArchive& archive, const MorphologyGrid& a,
                                        const MorphologyGrid& b);

/// Occupant with the smallest Hamming distance to `grid`; ties go to the
/// lower cell index. Throws EmptyArchive.
const Individual& closest_occupant(const EliteArchive& archive, const MorphologyGrid& grid);

inline constexpr int kArchiveVersion = 1;

/// Directory layout: manifest.json, log.csv, cells/NNNN.grid and
/// cells/NNNN.ckpt per occupied cell.
void save_archive(const std::string& dir, const EliteArchive& archive);
EliteArchive load_archive(const std::string& dir);

/// Plain list of individuals (e.g. fixture teachers): teachers.json plus
/// NNN.grid / NNN.ckpt per entry.
void save_teachers(const std::string& dir, const std::vector<Individual>& teachers, std::uint64_t config_hash);
std::vector<Individual> load_teachers(const std::string& dir, std::uint64_t* config_hash = nullptr);

}  // namespace voxdistill
