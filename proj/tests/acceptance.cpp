// Acceptance runner: one PASS/FAIL line per criterion, details indented
// underneath. Long-running; artifacts are shared between criteria and kept
// in --work so a failed criterion can be inspected afterwards.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "voxdistill/config.hpp"
#include "voxdistill/distillation.hpp"
#include "voxdistill/evaluation.hpp"
#include "voxdistill/evolution.hpp"
#include "voxdistill/stats.hpp"

using namespace voxdistill;
using namespace voxdistill::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::vector<std::string> details;
  void note(const std::string& s) { details.push_back(s); }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

// Seed streams for the shared artifacts.
enum Stream : std::uint64_t {
  kFixtureTeachers = 1,
  kTeacherData,
  kStudentTrain,
  kTeacherEval,
  kQd,
  kArchiveData,
  kArchiveTrain,
  kUnseen,
  kFinetune,
  kGradients,
  kCombos,
};

struct Settings {
  std::uint64_t seed = 2024;
  fs::path work = "acceptance_work";
  bool reuse = false;
  int workers = 1;
  // Reduced settings for the single-core budget.
  int tx_batch = 32;
  int archive_episodes = 10;
  int archive_train_steps = 20000;
  int finetune_generations = 60;
  int finetune_reps = 3;
};

class Context {
 public:
  explicit Context(const Settings& s) : s_(s), cfg_(RunConfig::defaults("desk")) {
    cfg_.seed = s.seed;
    cfg_.eval.workers = s.workers;
    cfg_.validate();
    fs::create_directories(s.work);
    save_config((s.work / "config.txt").string(), cfg_);
  }

  const RunConfig& config() const { return cfg_; }
  const Settings& settings() const { return s_; }
  std::uint64_t seed(Stream st) const { return derive_seed(cfg_.seed, st); }
  fs::path path(const std::string& name) const { return s_.work / name; }

  const std::vector<Individual>& fixture_teachers() {
    if (teachers_) return *teachers_;
    const fs::path dir = path("fixture_teachers");
    if (s_.reuse && fs::exists(dir / "teachers.json")) {
      teachers_ = load_teachers(dir.string());
      return *teachers_;
    }
    std::vector<Individual> out;
    const auto names = fixture_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto t0 = Clock::now();
      AfpoResult r = afpo_run(cfg_.afpo, {fixture(names[i])}, cfg_.eval, derive_seed(seed(kFixtureTeachers), i));
      progress(fmt("teacher %s: fitness %.3f after %d generations (%.0fs)", names[i].c_str(), r.champion.fitness,
                   cfg_.afpo.generations, since(t0)));
      out.push_back(std::move(r.champion));
    }
    save_teachers(dir.string(), out, cfg_.hash());
    teachers_ = std::move(out);
    return *teachers_;
  }

  const DistillDataset& teacher_dataset() {
    if (dataset_) return *dataset_;
    const fs::path file = path("fixture_dataset.vdds");
    if (s_.reuse && fs::exists(file)) {
      dataset_ = load_dataset(file.string());
      return *dataset_;
    }
    const auto& t = fixture_teachers();
    const auto t0 = Clock::now();
    dataset_ = collect_dataset(t, cfg_.episodes_per_teacher, noise(kTeacherData), cfg_.eval.world, s_.workers);
    progress(fmt("collected %zu records from %zu teachers (%.0fs)", dataset_->size(), t.size(), since(t0)));
    save_dataset(file.string(), *dataset_, cfg_.hash());
    return *dataset_;
  }

  const EliteArchive& archive() {
    if (archive_) return *archive_;
    const fs::path dir = path("archive");
    if (s_.reuse && fs::exists(dir / "manifest.json")) {
      archive_ = load_archive(dir.string());
      if (archive_->generation == cfg_.qd.generations) return *archive_;
    }
    const auto t0 = Clock::now();
    monotone_ = true;
    std::map<int, double> seen;
    std::size_t last_occupancy = 0;
    archive_ = map_elites_run(cfg_.qd, cfg_.eval, seed(kQd), nullptr, [&](const EliteArchive& a, const GenerationLog& g) {
      for (const auto& [cell, ind] : a.cells) {
        auto it = seen.find(cell);
        if (it != seen.end() && ind.fitness < it->second) monotone_ = false;
        seen[cell] = ind.fitness;
      }
      if (seen.size() != a.cells.size() || a.occupancy() < last_occupancy) monotone_ = false;
      last_occupancy = a.occupancy();
      if (g.generation % 250 == 0) {
        progress(fmt("qd generation %d: %zu cells, best %.3f (%.0fs)", g.generation, g.occupancy, g.best, since(t0)));
      }
    });
    archive_->config_hash = cfg_.hash();
    checked_generations_ = static_cast<int>(archive_->log.size());
    qd_seconds_ = since(t0);
    save_archive(dir.string(), *archive_);
    return *archive_;
  }

  // Set when the archive was produced in this process.
  std::optional<bool> monotone() const { return checked_generations_ > 0 ? std::optional(monotone_) : std::nullopt; }
  int checked_generations() const { return checked_generations_; }
  double qd_seconds() const { return qd_seconds_; }

  const ControllerSpec& archive_student() {
    if (archive_student_) return *archive_student_;
    const fs::path file = path("archive_student.ckpt");
    if (s_.reuse && fs::exists(file)) {
      archive_student_ = load_checkpoint(file.string());
      return *archive_student_;
    }
    const auto teachers = select_teachers_topk(archive(), 1.0);
    auto t0 = Clock::now();
    const DistillDataset data =
        collect_dataset(teachers, s_.archive_episodes, noise(kArchiveData), cfg_.eval.world, s_.workers);
    progress(fmt("collected %zu records from %zu occupants (%.0fs)", data.size(), teachers.size(), since(t0)));
    TrainConfig tc = cfg_.train;
    tc.steps = s_.archive_train_steps;
    tc.seed = seed(kArchiveTrain);
    t0 = Clock::now();
    const TrainResult r = train_student(data, cfg_.student_arch, cfg_.student_hyper, tc);
    progress(fmt("archive student: %d steps, final loss %.5f (%.0fs)", tc.steps, r.loss_curve.back(), since(t0)));
    save_checkpoint(file.string(), r.student, cfg_.hash());
    archive_student_ = r.student;
    return *archive_student_;
  }

  NoiseConfig noise(Stream st) const { return NoiseConfig{cfg_.eval.obs_noise_std, cfg_.eval.act_noise_std, seed(st)}; }

 private:
  Settings s_;
  RunConfig cfg_;
  std::optional<std::vector<Individual>> teachers_;
  std::optional<DistillDataset> dataset_;
  std::optional<EliteArchive> archive_;
  std::optional<ControllerSpec> archive_student_;
  bool monotone_ = true;
  int checked_generations_ = 0;
  double qd_seconds_ = 0.0;
};

// GlobalFC whose output biases put every action at exactly 1.0.
ControllerSpec inert_controller(const Hyper& h) {
  ControllerSpec c = zero_controller(Arch::GlobalFC, h);
  const double z = std::atanh((1.0 - 0.5 * (kActionMin + kActionMax)) / (0.5 * (kActionMax - kActionMin)));
  std::fill(c.params.end() - kSlots, c.params.end(), z);
  return c;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + fmt("%.3f", x);
  return out;
}

// t-test that tolerates a zero-variance sample: equal values either sit on
// mu0 (p = 1) or are infinitely far from it.
StatResult t_test(const std::vector<double>& x, double mu0, Alternative alt) {
  try {
    return one_sample_t_test(x, mu0, alt);
  } catch (const DegenerateSample&) {
    StatResult r;
    r.alternative = alt;
    const double m = x.empty() ? mu0 : x.front();
    const bool toward = (alt == Alternative::Less && m < mu0) || (alt == Alternative::Greater && m > mu0) ||
                        (alt == Alternative::TwoSided && m != mu0);
    r.p_value = toward ? 0.0 : 1.0;
    return r;
  }
}

// Distil from the fixture teachers and score the student on them.
EvalReport distill_and_score(Context& ctx, Arch arch, int batch, const std::string& tag, Outcome& o) {
  const RunConfig& cfg = ctx.config();
  TrainConfig tc = cfg.train;
  tc.batch_size = batch;
  tc.seed = derive_seed(ctx.seed(kStudentTrain), static_cast<std::uint64_t>(arch));
  const auto t0 = Clock::now();
  const TrainResult r = train_student(ctx.teacher_dataset(), arch, Hyper{}, tc);
  save_checkpoint(ctx.path(tag + ".ckpt").string(), r.student, cfg.hash());
  const double train_s = since(t0);
  const EvalReport rep = relative_performance(ctx.fixture_teachers(), r.student, cfg.eval, ctx.seed(kTeacherEval));
  std::vector<double> teach;
  std::vector<double> stud;
  for (const auto& row : rep.rows) {
    teach.push_back(row.teacher_mean);
    stud.push_back(row.student_mean);
  }
  o.note(fmt("%s: %d steps, batch %d, final loss %.5f, %.0fs", std::string(arch_name(arch)).c_str(), tc.steps, batch,
             r.loss_curve.back(), train_s));
  o.note("teacher fitness " + join(teach) + ", student fitness " + join(stud));
  o.note(fmt("relative per body %s, mean %.3f (se %.3f), undefined %zu", join(rep.relatives()).c_str(),
             rep.mean_relative, rep.se_relative, rep.undefined));
  return rep;
}

Outcome physics(Context&) {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(17);
  std::vector<MorphologyGrid> bodies;
  for (const std::string& n : fixture_names()) bodies.push_back(fixture(n));
  for (int i = 0; i < 4; ++i) bodies.push_back(random_morphology(rng));
  double drift = 0.0;
  for (std::size_t i = 0; i < bodies.size(); ++i) drift = std::max(drift, momentum_drift(bodies[i], 1000, 300 + i));
  double settle = 0.0;
  for (const std::string& n : fixture_names()) settle = std::max(settle, settled_speed(fixture(n), 500));
  const MorphologyGrid sym = parse_grid("00000\n01410\n23332\n41014\n20002\n");
  const double mir = std::max(mirror_deviation(sym, 500, 1), mirror_deviation(fixture("block"), 500, 2));

  bool same = true;
  Rng crng(3);
  for (const std::string& n : fixture_names()) {
    const ControllerSpec c = random_controller(Arch::GlobalFC, Hyper{}, crng);
    const NoiseConfig noise{0.01, 0.01, 42};
    const WorldConfig w;
    const EpisodeResult a = run_episode(fixture(n), c, w, noise, true);
    const EpisodeResult b = run_episode(fixture(n), c, w, noise, true);
    same = same && a.fitness == b.fitness && a.displacement == b.displacement && a.records.size() == b.records.size();
    for (std::size_t i = 0; same && i < a.records.size(); ++i) {
      same = a.records[i].obs == b.records[i].obs && a.records[i].action == b.records[i].action;
    }
  }
  EvalSettings quick;
  quick.world.episode_steps = 100;
  AfpoConfig ac;
  ac.generations = 3;
  ac.pop_size = 6;
  const AfpoResult r1 = afpo_run(ac, {fixture("worm")}, quick, 5);
  const AfpoResult r2 = afpo_run(ac, {fixture("worm")}, quick, 5);
  same = same && r1.trajectory == r2.trajectory && r1.champion.controller == r2.champion.controller;

  const double secs = since(t0);
  o.note(fmt("momentum drift %.3g over 1000 steps (%zu bodies)", drift, bodies.size()));
  o.note(fmt("settled COM speed %.3g (fixtures)", settle));
  o.note(fmt("mirror deviation %.3g", mir));
  o.note(std::string("fixed-seed reruns identical: ") + (same ? "yes" : "no"));
  o.note(fmt("runtime %.1fs", secs));
  o.pass = drift < 1e-6 && settle < 1e-3 && mir < 1e-6 && same && secs < 60.0;
  return o;
}

Outcome gradients(Context& ctx) {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(ctx.seed(kGradients));
  bool ok = true;
  for (Arch a : {Arch::GlobalFC, Arch::GlobalTx, Arch::ModularFC}) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const ControllerSpec spec = random_controller(a, Hyper{}, rng);
      MorphologyGrid g = random_morphology(rng);
      const ObservationFrame obs = random_frame(g, rng);
      ActionVector target;
      std::uniform_real_distribution<double> u(kActionMin, kActionMax);
      for (int s = 0; s < kSlots; ++s) target.values[static_cast<std::size_t>(s)] = g.occupied(s) ? u(rng) : 0.0;
      const auto coords = sample_coords(spec.params.size(), 200, rng);
      worst = std::max(worst, gradient_error(spec, obs, target, coords));
    }
    ok = ok && worst < 1e-4;
    o.note(fmt("%s: worst relative error %.3g over 20 cases x 200 coordinates", std::string(arch_name(a)).c_str(),
               worst));
  }
  const double secs = since(t0);
  o.note(fmt("runtime %.1fs", secs));
  o.pass = ok && secs < 60.0;
  return o;
}

Outcome distillation(Context& ctx) {
  Outcome o;
  const auto t0 = Clock::now();
  const auto& teachers = ctx.fixture_teachers();
  const auto& data = ctx.teacher_dataset();
  o.note(fmt("%zu fixture teachers, %d AFPO generations each; %zu records (%d episodes per teacher, %llu dropped)",
             teachers.size(), ctx.config().afpo.generations, data.size(), ctx.config().episodes_per_teacher,
             static_cast<unsigned long long>(data.failed_episodes)));
  const EvalReport rep = distill_and_score(ctx, Arch::GlobalFC, ctx.config().train.batch_size, "student_global_fc", o);
  const auto rel = rep.relatives();
  const StatResult less = t_test(rel, 1.0, Alternative::Less);
  const StatResult two = t_test(rel, 1.0, Alternative::TwoSided);
  o.note(fmt("t-test vs 1: t %.3f, one-sided (less) p %.4f, two-sided p %.4f", less.statistic, less.p_value,
             two.p_value));
  o.note(fmt("seeds: run %llu, teachers %llu, data %llu, train %llu, eval %llu",
             static_cast<unsigned long long>(ctx.config().seed),
             static_cast<unsigned long long>(ctx.seed(kFixtureTeachers)),
             static_cast<unsigned long long>(ctx.seed(kTeacherData)),
             static_cast<unsigned long long>(derive_seed(ctx.seed(kStudentTrain), 0)),
             static_cast<unsigned long long>(ctx.seed(kTeacherEval))));
  o.note(fmt("runtime %.0fs", since(t0)));
  o.pass = rep.undefined == 0 && rep.mean_relative >= 0.85 && less.p_value >= 0.05;
  return o;
}

Outcome exploration(Context& ctx) {
  Outcome o;
  const EliteArchive& a = ctx.archive();
  const RunConfig& cfg = ctx.config();
  const Individual& best = a.best();
  // Inert policy: every action 1.0, i.e. springs at their nominal length.
  // The reference is the best body plus the fixtures; tall occupants that
  // simply topple over are reported separately.
  const ControllerSpec inert = inert_controller(cfg.hyper);
  const double inert_on_best = evaluate(best.grid, inert, cfg.eval, ctx.seed(kQd)).mean;
  double inert_ref = inert_on_best;
  for (const std::string& n : fixture_names()) {
    inert_ref = std::max(inert_ref, evaluate(fixture(n), inert, cfg.eval, ctx.seed(kQd)).mean);
  }
  double inert_any = 0.0;
  int toppling = 0;
  for (const auto& [cell, ind] : a.cells) {
    const double f = evaluate(ind.grid, inert, cfg.eval, derive_seed(ctx.seed(kQd), 99, cell)).mean;
    inert_any = std::max(inert_any, f);
    toppling += f > 1.0 ? 1 : 0;
  }
  bool monotone = true;
  for (std::size_t i = 1; i < a.log.size(); ++i) {
    // qd score is left out: a new cell can hold a body that walked backwards
    monotone = monotone && a.log[i].occupancy >= a.log[i - 1].occupancy && a.log[i].best >= a.log[i - 1].best;
  }
  o.note(fmt("%d generations: %zu cells occupied, best fitness %.3f, qd score %.1f, migrations %llu", a.generation,
             a.occupancy(), best.fitness, a.qd_score(), static_cast<unsigned long long>(a.migrations)));
  o.note(fmt("inert policy: %.4f on the best body, %.4f at most over best body and fixtures", inert_on_best,
             inert_ref));
  o.note(fmt("best / inert = %.1f", best.fitness / std::max(inert_ref, 1e-12)));
  o.note(fmt("passive toppling: %d of %zu occupied bodies move > 1 under the inert policy, at most %.3f (best / that "
             "= %.1f, not gated)",
             toppling, a.occupancy(), inert_any, best.fitness / std::max(inert_any, 1e-12)));
  const auto per_cell = ctx.monotone();
  if (per_cell) {
    o.note(fmt("per-cell fitness never decreased over %d logged generations: %s", ctx.checked_generations(),
               *per_cell ? "yes" : "no"));
    o.note(fmt("runtime %.0fs", ctx.qd_seconds()));
  } else {
    o.note("archive reused from a previous run; per-cell check limited to the log totals");
  }
  o.pass = a.generation == cfg.qd.generations && a.occupancy() >= 60 && best.fitness >= 3.0 * inert_ref &&
           best.fitness > 0.0 && monotone && per_cell.value_or(true);
  return o;
}

Outcome model_independence(Context& ctx) {
  Outcome o;
  const auto t0 = Clock::now();
  const EvalReport tx = distill_and_score(ctx, Arch::GlobalTx, ctx.settings().tx_batch, "student_global_tx", o);
  const EvalReport mod =
      distill_and_score(ctx, Arch::ModularFC, ctx.config().train.batch_size, "student_modular_fc", o);
  o.note(fmt("runtime %.0fs", since(t0)));
  o.pass = tx.undefined == 0 && mod.undefined == 0 && tx.mean_relative >= 0.75 && mod.mean_relative >= 0.75;
  return o;
}

Outcome generalization(Context& ctx) {
  Outcome o;
  const auto t0 = Clock::now();
  const EliteArchive& a = ctx.archive();
  const ControllerSpec& student = ctx.archive_student();
  EvalSettings eval = ctx.config().eval;
  eval.reps = ctx.config().generalization_reps;
  const GeneralizationReport rep = unseen_generalization(a, student, 30, eval, ctx.seed(kUnseen), 50);
  {
    std::ofstream csv(ctx.path("generalize.csv"));
    write_csv(csv, rep);
  }
  std::size_t defined = 0;
  for (const auto& r : rep.rows) defined += r.ratio_defined ? 1 : 0;
  o.note(fmt("archive student from %zu occupants, %d episodes each, %d steps", a.occupancy(),
             ctx.settings().archive_episodes, ctx.settings().archive_train_steps));
  o.note(fmt("%zu unseen bodies from %d pairs; student wins %zu (%.1f%%)", rep.rows.size(), rep.pairs, rep.wins,
             100.0 * rep.win_rate()));
  o.note(fmt("ratio student/baseline over %zu bodies with a positive baseline: mean %.3f (se %.3f)", defined,
             rep.mean_ratio, rep.se_ratio));
  if (rep.test_defined) {
    o.note(fmt("one-sided t-test ratio > 1: t %.3f, p %.3g", rep.ratio_test.statistic, rep.ratio_test.p_value));
  } else {
    o.note("one-sided t-test undefined");
  }
  o.note(fmt("runtime %.0fs", since(t0)));
  o.pass = rep.rows.size() >= 50 && rep.win_rate() > 0.5 && rep.test_defined && rep.ratio_test.p_value < 0.05;
  return o;
}

Outcome finetuning(Context& ctx) {
  Outcome o;
  const auto t0 = Clock::now();
  const EliteArchive& a = ctx.archive();
  const ControllerSpec& student = ctx.archive_student();
  EvalSettings eval = ctx.config().eval;
  eval.reps = ctx.settings().finetune_reps;
  const FinetuneReport rep =
      finetune_experiment(a, student, 20, ctx.settings().finetune_generations, eval, ctx.seed(kFinetune), 0.95);
  {
    std::ofstream csv(ctx.path("finetune.csv"));
    write_csv(csv, rep);
  }
  std::vector<double> sf;
  std::vector<double> bf;
  for (const auto& r : rep.rows) {
    sf.push_back(r.student_final);
    bf.push_back(r.baseline_final);
  }
  o.note(fmt("%zu unseen bodies, %d generations, %d reps per evaluation", rep.rows.size(),
             ctx.settings().finetune_generations, eval.reps));
  o.note(fmt("median convergence generation: student %.1f, baseline %.1f", rep.median_student, rep.median_baseline));
  o.note(fmt("Wilcoxon rank-sum (student earlier): W %.1f, p %.3g", rep.wilcoxon.statistic, rep.wilcoxon.p_value));
  o.note(fmt("mean final fitness: student %.3f, baseline %.3f", mean(sf), mean(bf)));
  o.note(fmt("runtime %.0fs", since(t0)));
  o.pass = rep.rows.size() >= 20 && rep.median_student <= rep.median_baseline;
  return o;
}

Alternative parse_alt(const std::string& s) {
  if (s == "greater") return Alternative::Greater;
  if (s == "less") return Alternative::Less;
  return Alternative::TwoSided;
}

Outcome statistics(Context&) {
  Outcome o;
  std::ifstream in(VOXDISTILL_TEST_DATA "/ttest_reference.csv");
  std::string line;
  std::getline(in, line);
  int cases = 0;
  double worst_t = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    std::vector<double> x;
    for (std::size_t i = 4; i < cells.size(); ++i) x.push_back(std::stod(cells[i]));
    const StatResult r = one_sample_t_test(x, std::stod(cells[1]), parse_alt(cells[0]));
    worst_t = std::max(worst_t, std::abs(r.p_value - std::stod(cells[3])));
    ++cases;
  }
  Rng rng(31);
  std::uniform_int_distribution<int> size(1, 6);
  std::uniform_int_distribution<int> value(0, 9);
  std::normal_distribution<double> shift(0.0, 2.0);
  double worst_w = 0.0;
  int trials = 0;
  for (; trials < 500; ++trials) {
    const int n = size(rng);
    const int m = size(rng);
    const double s = std::round(shift(rng));
    std::vector<double> a;
    std::vector<double> b;
    for (int i = 0; i < n; ++i) a.push_back(value(rng) + s);
    for (int i = 0; i < m; ++i) b.push_back(value(rng));
    for (Alternative alt : {Alternative::TwoSided, Alternative::Greater, Alternative::Less}) {
      worst_w = std::max(worst_w, std::abs(wilcoxon_rank_sum(a, b, alt).p_value - enumerated_rank_sum_p(a, b, alt)));
    }
  }
  o.note(fmt("t-test: %d pinned cases, largest p deviation %.3g", cases, worst_t));
  o.note(fmt("rank sum: %d random samples with n, m <= 6, three alternatives, largest p deviation %.3g", trials,
             worst_w));
  o.pass = cases == 100 && worst_t < 1e-6 && worst_w < 0.02;
  return o;
}

Outcome combinatorics(Context& ctx) {
  Outcome o;
  const RunConfig& cfg = ctx.config();
  WorldConfig world = cfg.eval.world;
  world.episode_steps = 50;
  Rng rng(ctx.seed(kCombos));
  const auto names = fixture_names();
  std::vector<std::vector<DistillDataset>> per(names.size());
  for (std::size_t m = 0; m < names.size(); ++m) {
    for (int r = 0; r < 3; ++r) {
      Individual champ;
      champ.grid = fixture(names[m]);
      champ.controller = random_controller(cfg.arch, cfg.hyper, rng);
      per[m].push_back(collect_dataset({champ}, 1, ctx.noise(kCombos), world));
    }
  }
  const auto combos = combo_datasets(per);
  // Identify each champion by its first recorded action.
  std::set<std::vector<double>> distinct;
  bool shape = true;
  for (const DistillDataset& d : combos) {
    std::vector<double> key;
    std::set<std::uint32_t> bodies;
    for (const DistillRecord& r : d.records) bodies.insert(r.morphology_id);
    shape = shape && d.index.size() == names.size() && bodies.size() == names.size();
    for (std::size_t m = 0; m < names.size(); ++m) {
      for (int r = 0; r < 3; ++r) {
        const auto& first = per[m][static_cast<std::size_t>(r)].records.front();
        const auto hit = std::find_if(d.records.begin(), d.records.end(), [&](const DistillRecord& x) {
          return d.index[x.morphology_id] == per[m][0].index[0] && x.action == first.action;
        });
        if (hit != d.records.end()) key.push_back(m * 3 + r);
      }
    }
    shape = shape && key.size() == names.size();
    distinct.insert(key);
  }
  o.note(fmt("%zu morphologies x 3 champions -> %zu datasets, %zu distinct champion tuples", names.size(),
             combos.size(), distinct.size()));
  o.pass = combos.size() == 81 && distinct.size() == 81 && shape;
  return o;
}

bool throws_format(const std::function<void()>& f) {
  try {
    f();
  } catch (const FormatError&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

void poke_byte(const fs::path& file, std::size_t at, char value) {
  std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(static_cast<std::streamoff>(at));
  f.put(value);
}

Outcome persistence(Context& ctx) {
  Outcome o;
  const auto t0 = Clock::now();
  const RunConfig& cfg = ctx.config();
  const EliteArchive& a = ctx.archive();

  const fs::path dir = ctx.path("roundtrip_archive");
  fs::remove_all(dir);
  save_archive(dir.string(), a);
  const EliteArchive b = load_archive(dir.string());
  bool same = a.cells.size() == b.cells.size() && a.generation == b.generation && a.config_hash == b.config_hash &&
              a.migrations == b.migrations && a.next_id == b.next_id && a.log.size() == b.log.size();
  for (auto ia = a.cells.begin(), ib = b.cells.begin(); same && ia != a.cells.end(); ++ia, ++ib) {
    same = ia->first == ib->first && ia->second.grid == ib->second.grid &&
           ia->second.controller == ib->second.controller && ia->second.fitness == ib->second.fitness &&
           ia->second.age == ib->second.age && ia->second.id == ib->second.id &&
           ia->second.parent_id == ib->second.parent_id;
  }
  for (std::size_t i = 0; same && i < a.log.size(); ++i) {
    same = a.log[i].occupancy == b.log[i].occupancy && a.log[i].best == b.log[i].best &&
           a.log[i].qd_score == b.log[i].qd_score && a.log[i].migrations == b.log[i].migrations;
  }
  o.note(fmt("archive round trip (%zu occupants, %zu log rows) identical: %s", b.cells.size(), b.log.size(),
             same ? "yes" : "no"));

  const fs::path ckpt = ctx.path("version_check.ckpt");
  save_checkpoint(ckpt.string(), a.best().controller, cfg.hash());
  const bool ckpt_ok = load_checkpoint(ckpt.string()) == a.best().controller;
  poke_byte(ckpt, 4, static_cast<char>(kCheckpointVersion + 1));
  const bool ckpt_rejects = throws_format([&] { load_checkpoint(ckpt.string()); });

  DistillDataset small = collect_dataset({a.best()}, 1, ctx.noise(kArchiveData), cfg.eval.world);
  const fs::path ds = ctx.path("version_check.vdds");
  save_dataset(ds.string(), small, cfg.hash());
  std::uint64_t ds_hash = 0;
  const bool ds_ok = load_dataset(ds.string(), &ds_hash).size() == small.size() && ds_hash == cfg.hash();
  poke_byte(ds, 4, static_cast<char>(kDatasetVersion + 1));
  const bool ds_rejects = throws_format([&] { load_dataset(ds.string()); }) &&
                          throws_format([&] { DatasetFile f(ds.string()); });
  const std::string manifest = (dir / "manifest.json").string();
  {
    std::ifstream in(manifest);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    const auto at = text.find("\"version\": 1");
    if (at != std::string::npos) text.replace(at, 12, "\"version\": 9");
    std::ofstream out(manifest, std::ios::trunc);
    out << text;
  }
  const bool archive_rejects = throws_format([&] { load_archive(dir.string()); });
  o.note(fmt("checkpoint round trip %s, newer version rejected %s", ckpt_ok ? "yes" : "no",
             ckpt_rejects ? "yes" : "no"));
  o.note(fmt("dataset round trip %s, newer version rejected %s; archive newer version rejected %s",
             ds_ok ? "yes" : "no", ds_rejects ? "yes" : "no", archive_rejects ? "yes" : "no"));

  // Same config reloaded from disk, same hash, same first 50 generations.
  const RunConfig again = load_config(ctx.path("config.txt").string());
  MapElitesConfig qd = again.qd;
  qd.generations = 50;
  EvalSettings eval = again.eval;
  eval.workers = ctx.settings().workers;
  const EliteArchive prefix = map_elites_run(qd, eval, ctx.seed(kQd));
  bool log_same = prefix.log.size() == 51 && a.log.size() >= 51;
  for (std::size_t i = 0; log_same && i < prefix.log.size(); ++i) {
    log_same = prefix.log[i].generation == a.log[i].generation && prefix.log[i].occupancy == a.log[i].occupancy &&
               prefix.log[i].best == a.log[i].best && prefix.log[i].qd_score == a.log[i].qd_score &&
               prefix.log[i].migrations == a.log[i].migrations && prefix.log[i].insertions == a.log[i].insertions;
  }
  const bool hash_same = again.hash() == cfg.hash() && a.config_hash == cfg.hash();
  o.note(fmt("config hash %016llx reloaded %016llx archive %016llx", static_cast<unsigned long long>(cfg.hash()),
             static_cast<unsigned long long>(again.hash()), static_cast<unsigned long long>(a.config_hash)));
  o.note(fmt("re-run of the first 50 generations matches the logged prefix bit for bit: %s", log_same ? "yes" : "no"));
  o.note(fmt("runtime %.0fs", since(t0)));
  o.pass = same && ckpt_ok && ckpt_rejects && ds_ok && ds_rejects && archive_rejects && hash_same && log_same;
  return o;
}

struct Criterion {
  int id;
  const char* title;
  Outcome (*run)(Context&);
};

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  std::vector<int> only;
  CLI::App app{"voxdistill acceptance runner"};
  app.add_option("--seed", s.seed, "run seed");
  app.add_option("--work", s.work, "artifact directory");
  app.add_flag("--reuse", s.reuse, "reuse artifacts already in the work directory");
  app.add_option("--workers", s.workers, "evaluation threads")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "criteria to run (default all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const Criterion criteria[] = {
      {1, "physics invariants", physics},
      {2, "gradient correctness", gradients},
      {3, "distillation matches teachers", distillation},
      {4, "quality-diversity exploration", exploration},
      {5, "model independence", model_independence},
      {6, "generalization to unseen bodies", generalization},
      {7, "fine-tuning prior", finetuning},
      {8, "statistics oracles", statistics},
      {9, "champion combinations", combinatorics},
      {10, "persistence round trips", persistence},
  };

  Context ctx(s);
  std::cout << "seed " << s.seed << ", profile desk, config hash " << std::hex << ctx.config().hash() << std::dec
            << ", work " << s.work.string() << "\n";
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o.pass = false;
      o.note(std::string("error: ") + e.what());
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.title << fmt("  (%.0fs)", since(t0)) << "\n";
    for (const std::string& d : o.details) std::cout << "        " << d << "\n";
    std::cout.flush();
  }
  std::cout << (failed == 0 ? "all criteria passed" : fmt("%d criteria failed", failed)) << "\n";
  return failed == 0 ? 0 : 1;
}
