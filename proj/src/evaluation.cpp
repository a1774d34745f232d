#include "voxdistill/evaluation.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include "voxdistill/parallel.hpp"

namespace voxdistill {

namespace {

constexpr std::uint64_t kPairStream = 0x70616972ULL;
constexpr std::uint64_t kFinetuneStream = 0x66696e65ULL;

std::string csv_grid(const MorphologyGrid& g) {
  std::string s = format_grid(g);
  std::replace(s.begin(), s.end(), '\n', '/');
  if (!s.empty() && s.back() == '/') s.pop_back();
  return s;
}

// Evaluates many (body, controller) pairs, fanning the episodes out.
std::vector<FitnessEstimate> evaluate_all(const std::vector<const MorphologyGrid*>& grids,
                                          const std::vector<const ControllerSpec*>& controllers,
                                          const std::vector<std::uint64_t>& seeds, const EvalSettings& eval) {
  const auto reps = static_cast<std::size_t>(eval.reps);
  if (eval.reps < 1) throw ConfigError("reps must be at least 1");
  std::vector<double> raw(grids.size() * reps);
  parallel_for(raw.size(), eval.workers, [&](std::size_t task) {
    const std::size_t i = task / reps;
    const NoiseConfig noise{eval.obs_noise_std, eval.act_noise_std, derive_seed(seeds[i], task % reps)};
    raw[task] = run_episode(*grids[i], *controllers[i], eval.world, noise).fitness;
  });
  std::vector<FitnessEstimate> out(grids.size());
  for (std::size_t i = 0; i < grids.size(); ++i) {
    out[i].raws.assign(raw.begin() + static_cast<std::ptrdiff_t>(i * reps),
                       raw.begin() + static_cast<std::ptrdiff_t>((i + 1) * reps));
    out[i].mean = mean(out[i].raws);
  }
  return out;
}

}  // namespace

std::vector<double> EvalReport::relatives() const {
  std::vector<double> out;
  for (const MorphologyReport& r : rows) {
    if (r.relative_defined) out.push_back(r.relative);
  }
  return out;
}

EvalReport relative_performance(const std::vector<Individual>& teachers, const ControllerSpec& student,
                                const EvalSettings& eval, std::uint64_t seed) {
  std::vector<const MorphologyGrid*> grids;
  std::vector<const ControllerSpec*> controllers;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < teachers.size(); ++i) {
    for (const ControllerSpec* c : {&teachers[i].controller, &student}) {
      grids.push_back(&teachers[i].grid);
      controllers.push_back(c);
      seeds.push_back(derive_seed(seed, i));
    }
  }
  const std::vector<FitnessEstimate> fit = evaluate_all(grids, controllers, seeds, eval);

  EvalReport report;
  for (std::size_t i = 0; i < teachers.size(); ++i) {
    MorphologyReport row;
    row.grid = teachers[i].grid;
    row.teacher_mean = fit[2 * i].mean;
    row.teacher_raws = fit[2 * i].raws;
    row.student_mean = fit[2 * i + 1].mean;
    row.student_raws = fit[2 * i + 1].raws;
    row.relative_defined = row.teacher_mean > 0.0;
    row.relative = row.relative_defined ? row.student_mean / row.teacher_mean : 0.0;
    if (!row.relative_defined) ++report.undefined;
    report.rows.push_back(std::move(row));
  }
  const std::vector<double> rel = report.relatives();
  report.mean_relative = rel.empty() ? 0.0 : mean(rel);
  report.se_relative = standard_error(rel);
  return report;
}

std::vector<std::pair<int, MorphologyGrid>> sample_unseen(const EliteArchive& archive, int n_pairs,
                                                          std::size_t min_bodies, std::uint64_t seed) {
  std::vector<const Individual*> occupants;
  for (const auto& [cell, ind] : archive.cells) occupants.push_back(&ind);
  if (occupants.empty()) throw EmptyArchive("archive has no occupants");
  if (occupants.size() < 2) return {};

  Rng rng(derive_seed(seed, kPairStream));
  std::uniform_int_distribution<std::size_t> pick(0, occupants.size() - 1);
  std::set<MorphologyGrid> seen;
  std::vector<std::pair<int, MorphologyGrid>> out;
  const int max_pairs = std::max(n_pairs, 1) * 50;
  for (int pair = 0; pair < max_pairs; ++pair) {
    if (pair >= n_pairs && out.size() >= min_bodies) break;
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    while (j == i) j = pick(rng);
    for (const MorphologyGrid& g : unseen_path(archive, occupants[i]->grid, occupants[j]->grid)) {
      if (seen.insert(g).second) out.emplace_back(pair, g);
    }
  }
  return out;
}

GeneralizationReport unseen_generalization(const EliteArchive& archive, const ControllerSpec& student, int n_pairs,
                                           const EvalSettings& eval, std::uint64_t seed, std::size_t min_bodies) {
  GeneralizationReport report;
  const auto bodies = sample_unseen(archive, n_pairs, min_bodies, seed);
  report.pairs = bodies.empty() ? 0 : bodies.back().first + 1;

  std::vector<const MorphologyGrid*> grids;
  std::vector<const ControllerSpec*> controllers;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    GeneralizationRow row;
    row.grid = bodies[i].second;
    row.pair = bodies[i].first;
    const Individual& base = closest_occupant(archive, row.grid);
    row.baseline_cell = cell_index(descriptor(base.grid));
    row.hamming = hamming_distance(row.grid, base.grid);
    report.rows.push_back(row);
  }
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const GeneralizationRow& row = report.rows[i];
    const ControllerSpec& base = archive.cells.at(row.baseline_cell).controller;
    for (const ControllerSpec* c : {&student, &base}) {
      grids.push_back(&row.grid);
      controllers.push_back(c);
      seeds.push_back(derive_seed(seed, i));
    }
  }
  const std::vector<FitnessEstimate> fit = evaluate_all(grids, controllers, seeds, eval);

  std::vector<double> ratios;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    GeneralizationRow& row = report.rows[i];
    row.student = fit[2 * i].mean;
    row.baseline = fit[2 * i + 1].mean;
    row.ratio_defined = row.baseline > 0.0;
    row.ratio = row.ratio_defined ? row.student / row.baseline : 0.0;
    if (row.student > row.baseline) ++report.wins;
    if (row.ratio_defined) ratios.push_back(row.ratio);
  }
  report.mean_ratio = ratios.empty() ? 0.0 : mean(ratios);
  report.se_ratio = standard_error(ratios);
  try {
    report.ratio_test = one_sample_t_test(ratios, 1.0, Alternative::Greater);
    report.test_defined = true;
  } catch (const DegenerateSample&) {
    report.test_defined = false;
  }
  return report;
}

FinetuneResult finetune(const ControllerSpec& start, const MorphologyGrid& grid, const EvalSettings& eval,
                        int generations, std::uint64_t seed, int pop_size) {
  AfpoConfig config;
  config.pop_size = pop_size;
  config.generations = generations;
  config.fitness_mode = FitnessMode::Single;
  config.arch = start.arch;
  config.hyper = start.hyper;
  AfpoResult r = afpo_run(config, {grid}, eval, seed, &start);
  return {std::move(r.champion), std::move(r.trajectory)};
}

int convergence_generation(std::span<const double> trajectory, double fraction) {
  if (trajectory.empty()) throw ConfigError("convergence needs a non-empty trajectory");
  const double target = fraction * trajectory.back();
  for (std::size_t g = 0; g < trajectory.size(); ++g) {
    if (trajectory[g] >= target) return static_cast<int>(g);
  }
  return static_cast<int>(trajectory.size() - 1);
}

FinetuneReport finetune_experiment(const EliteArchive& archive, const ControllerSpec& student, int n_bodies,
                                   int generations, const EvalSettings& eval, std::uint64_t seed, double fraction) {
  FinetuneReport report;
  report.fraction = fraction;
  auto bodies = sample_unseen(archive, 1, static_cast<std::size_t>(std::max(n_bodies, 0)), seed);
  if (bodies.size() > static_cast<std::size_t>(n_bodies)) bodies.resize(static_cast<std::size_t>(n_bodies));

  // The runs are independent, so a single worker per run and the pool
  // across runs keeps every core busy.
  EvalSettings inner = eval;
  inner.workers = 1;
  report.rows.resize(bodies.size());
  parallel_for(bodies.size() * 2, eval.workers, [&](std::size_t task) {
    const std::size_t i = task / 2;
    FinetuneRow& row = report.rows[i];
    const MorphologyGrid& grid = bodies[i].second;
    const std::uint64_t run_seed = derive_seed(seed, kFinetuneStream, i);
    if (task % 2 == 0) {
      FinetuneResult r = finetune(student, grid, inner, generations, run_seed);
      row.student_trajectory = std::move(r.trajectory);
    } else {
      const Individual& base = closest_occupant(archive, grid);
      FinetuneResult r = finetune(base.controller, grid, inner, generations, run_seed);
      row.baseline_trajectory = std::move(r.trajectory);
    }
  });

  std::vector<double> sg;
  std::vector<double> bg;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    FinetuneRow& row = report.rows[i];
    row.grid = bodies[i].second;
    row.baseline_cell = cell_index(descriptor(closest_occupant(archive, row.grid).grid));
    row.student_generation = convergence_generation(row.student_trajectory, fraction);
    row.baseline_generation = convergence_generation(row.baseline_trajectory, fraction);
    row.student_final = row.student_trajectory.back();
    row.baseline_final = row.baseline_trajectory.back();
    sg.push_back(row.student_generation);
    bg.push_back(row.baseline_generation);
  }
  if (!sg.empty()) {
    report.median_student = median(sg);
    report.median_baseline = median(bg);
    report.wilcoxon = wilcoxon_rank_sum(sg, bg, Alternative::Less);
  }
  return report;
}

void write_csv(std::ostream& out, const EvalReport& report) {
  out << "row,grid,repetition,teacher,student,teacher_mean,student_mean,relative,relative_defined\n";
  out.precision(10);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const MorphologyReport& r = report.rows[i];
    for (std::size_t k = 0; k < r.teacher_raws.size(); ++k) {
      out << i << ',' << csv_grid(r.grid) << ',' << k << ',' << r.teacher_raws[k] << ',' << r.student_raws[k] << ','
          << r.teacher_mean << ',' << r.student_mean << ',' << r.relative << ',' << (r.relative_defined ? 1 : 0)
          << '\n';
    }
  }
}

void write_csv(std::ostream& out, const GeneralizationReport& report) {
  out << "row,pair,grid,baseline_cell,hamming,student,baseline,ratio,ratio_defined,student_wins\n";
  out.precision(10);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const GeneralizationRow& r = report.rows[i];
    out << i << ',' << r.pair << ',' << csv_grid(r.grid) << ',' << r.baseline_cell << ',' << r.hamming << ','
        << r.student << ',' << r.baseline << ',' << r.ratio << ',' << (r.ratio_defined ? 1 : 0) << ','
        << (r.student > r.baseline ? 1 : 0) << '\n';
  }
}

void write_csv(std::ostream& out, const FinetuneReport& report) {
  out << "row,grid,baseline_cell,student_generation,baseline_generation,student_final,baseline_final\n";
  out.precision(10);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const FinetuneRow& r = report.rows[i];
    out << i << ',' << csv_grid(r.grid) << ',' << r.baseline_cell << ',' << r.student_generation << ','
        << r.baseline_generation << ',' << r.student_final << ',' << r.baseline_final << '\n';
  }
}

}  // namespace voxdistill
