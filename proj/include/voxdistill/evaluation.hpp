#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "voxdistill/evolution.hpp"
#include "voxdistill/stats.hpp"

namespace voxdistill {

struct MorphologyReport {
  MorphologyGrid grid;
  double teacher_mean = 0.0;
  double student_mean = 0.0;
  // student / teacher; only meaningful when the teacher mean is positive
  double relative = 0.0;
  bool relative_defined = false;
  std::vector<double> teacher_raws;
  std::vector<double> student_raws;
};

struct EvalReport {
  std::vector<MorphologyReport> rows;
  double mean_relative = 0.0;  // over rows with a defined ratio
  double se_relative = 0.0;
  std::size_t undefined = 0;

  std::vector<double> relatives() const;
};

/// Teacher and student are evaluated on the teacher's body with the same
/// seeds, derive_seed(seed, row).
EvalReport relative_performance(const std::vector<Individual>& teachers, const ControllerSpec& student,
                                const EvalSettings& eval, std::uint64_t seed);

struct GeneralizationRow {
  MorphologyGrid grid;
  int pair = 0;
  int baseline_cell = -1;
  int hamming = 0;
  double student = 0.0;
  double baseline = 0.0;
  double ratio = 0.0;
  bool ratio_defined = false;  // baseline mean > 0
};

struct GeneralizationReport {
  std::vector<GeneralizationRow> rows;
  int pairs = 0;
  std::size_t wins = 0;  // student mean strictly above baseline mean
  double mean_ratio = 0.0;
  double se_ratio = 0.0;
  bool test_defined = false;
  StatResult ratio_test;  // one-sample t, ratio > 1

  double win_rate() const { return rows.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(rows.size()); }
};

/// Unique bodies on the walk between distinct pairs of archive occupants
/// that are not themselves in the archive. Pairs are drawn until at least
/// `n_pairs` have been used and at least `min_bodies` bodies collected
/// (bounded number of attempts). Each entry is (pair number, body). A
/// single-occupant archive has no pairs and yields nothing.
std::vector<std::pair<int, MorphologyGrid>> sample_unseen(const EliteArchive& archive, int n_pairs,
                                                          std::size_t min_bodies, std::uint64_t seed);

/// Student versus the Hamming-closest occupant's controller on every
/// sampled unseen body. Use eval.reps = 10 for the standard protocol.
GeneralizationReport unseen_generalization(const EliteArchive& archive, const ControllerSpec& student, int n_pairs,
                                           const EvalSettings& eval, std::uint64_t seed, std::size_t min_bodies = 0);

struct FinetuneResult {
  Individual champion;
  std::vector<double> trajectory;
};

/// Single-body AFPO whose initial population is entirely `start`.
FinetuneResult finetune(const ControllerSpec& start, const MorphologyGrid& grid, const EvalSettings& eval,
                        int generations, std::uint64_t seed, int pop_size = 16);

/// Smallest g with trajectory[g] >= fraction * trajectory.back().
int convergence_generation(std::span<const double> trajectory, double fraction);

struct FinetuneRow {
  MorphologyGrid grid;
  int baseline_cell = -1;
  int student_generation = 0;
  int baseline_generation = 0;
  double student_final = 0.0;
  double baseline_final = 0.0;
  std::vector<double> student_trajectory;
  std::vector<double> baseline_trajectory;
};

struct FinetuneReport {
  std::vector<FinetuneRow> rows;
  double fraction = 0.95;
  double median_student = 0.0;
  double median_baseline = 0.0;
  StatResult wilcoxon;  // student generations less than baseline generations
};

/// Fine-tunes the student and the Hamming-closest occupant's controller on
/// `n_bodies` unseen bodies and compares convergence generations.
FinetuneReport finetune_experiment(const EliteArchive& archive, const ControllerSpec& student, int n_bodies,
                                   int generations, const EvalSettings& eval, std::uint64_t seed,
                                   double fraction = 0.95);

void write_csv(std::ostream& out, const EvalReport& report);
void write_csv(std::ostream& out, const GeneralizationReport& report);
void write_csv(std::ostream& out, const FinetuneReport& report);

}  // namespace voxdistill
