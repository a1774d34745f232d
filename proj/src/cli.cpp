#include "voxdistill/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "voxdistill/config.hpp"
#include "voxdistill/distillation.hpp"
#include "voxdistill/evaluation.hpp"
#include "voxdistill/evolution.hpp"

namespace voxdistill {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTeacherStream = 0x7465616368ULL;
constexpr std::uint64_t kCollectStream = 0x636f6c6cULL;
constexpr std::uint64_t kTrainStream = 0x747261696eULL;
constexpr std::uint64_t kEvalStream = 0x6576616cULL;
constexpr std::uint64_t kGeneralizeStream = 0x67656e6cULL;
constexpr std::uint64_t kFinetuneStream = 0x66696e74ULL;
constexpr std::uint64_t kJointStream = 0x6a6f696eULL;

struct Common {
  std::string config_path;
  std::string profile;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::string out;
  // dedicated flags, applied last so they win over file and --set values
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config_path, "config file (key = value lines)");
  cmd->add_option("--profile", c.profile, "desk or paper defaults");
  cmd->add_option("--set", c.sets, "override a config key, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("--workers", c.workers, "concurrent episode evaluations (default: all cores)");
  if (needs_out) cmd->add_option("--out", c.out, "output directory")->required();
}

RunConfig build_config(const Common& c) {
  RunConfig config;
  if (!c.config_path.empty()) {
    config = load_config(c.config_path);
    if (!c.profile.empty() && c.profile != config.profile) {
      throw ConfigError("--profile " + c.profile + " conflicts with profile '" + config.profile + "' in " +
                        c.config_path);
    }
  } else {
    config = RunConfig::defaults(c.profile.empty() ? "desk" : c.profile);
  }
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, value] : c.overrides) config.set(key, value);
  if (c.seed) config.seed = *c.seed;
  if (c.workers > 0) config.eval.workers = c.workers;
  config.validate();
  return config;
}

void prepare_out(const std::string& out, const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw FormatError("cannot create output directory '" + out + "': " + ec.message());
  save_config((fs::path(out) / "config.txt").string(), config);
}

json stat_json(const StatResult& r) {
  return {{"statistic", r.statistic}, {"p_value", r.p_value}, {"alternative", alternative_name(r.alternative)}};
}

json report_header(std::string_view command, const RunConfig& config) {
  return {{"command", command},
          {"profile", config.profile},
          {"config_hash", config.hash()},
          {"seed", config.seed},
          {"seeds", json::object()}};
}

void write_json(const std::string& out, const std::string& name, const json& j) {
  std::ofstream f(fs::path(out) / name, std::ios::trunc);
  f << j.dump(2) << '\n';
  if (!f) throw FormatError("failed writing " + name);
}

template <class Report>
void write_report_csv(const std::string& out, const std::string& name, const Report& report) {
  std::ofstream f(fs::path(out) / name, std::ios::trunc);
  write_csv(f, report);
  if (!f) throw FormatError("failed writing " + name);
}

std::string one_line(const MorphologyGrid& g) {
  std::string s = format_grid(g);
  for (char& ch : s) {
    if (ch == '\n') ch = '/';
  }
  if (!s.empty() && s.back() == '/') s.pop_back();
  return s;
}

// --- teacher sources -------------------------------------------------------

struct TeacherSource {
  std::string archive;
  std::string teachers;
  std::string select = "all";
};

void add_teacher_source(CLI::App* cmd, TeacherSource& t) {
  cmd->add_option("--archive", t.archive, "MAP-Elites archive directory");
  cmd->add_option("--teachers", t.teachers, "teacher directory written by an earlier run");
  cmd->add_option("--select", t.select, "all | topk=F | spread=K | fixtures");
}

std::vector<Individual> evolve_fixture_teachers(const RunConfig& config, std::ostream& log, json& seeds) {
  std::vector<Individual> teachers;
  const std::vector<std::string> names = fixture_names();
  json used = json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::uint64_t seed = derive_seed(config.seed, kTeacherStream, i);
    used.push_back(seed);
    AfpoResult r = afpo_run(config.afpo, {fixture(names[i])}, config.eval, seed);
    r.champion.grid = fixture(names[i]);
    log << "teacher " << names[i] << " fitness " << r.champion.fitness << '\n';
    teachers.push_back(std::move(r.champion));
  }
  seeds["teachers"] = used;
  return teachers;
}

std::vector<Individual> resolve_teachers(const TeacherSource& src, const RunConfig& config, const std::string& out,
                                         std::ostream& log, json& report) {
  if (!src.teachers.empty()) {
    report["teachers_from"] = src.teachers;
    return load_teachers(src.teachers);
  }
  if (src.select == "fixtures") {
    std::vector<Individual> t = evolve_fixture_teachers(config, log, report["seeds"]);
    save_teachers((fs::path(out) / "teachers").string(), t, config.hash());
    report["teachers_from"] = "fixtures";
    return t;
  }
  if (src.archive.empty()) throw ConfigError("give --archive, --teachers or --select fixtures");
  const EliteArchive archive = load_archive(src.archive);
  report["teachers_from"] = src.archive;
  report["selection"] = src.select;
  if (src.select == "all") return select_teachers_topk(archive, 1.0);
  const auto eq = src.select.find('=');
  const std::string kind = src.select.substr(0, eq);
  const std::string arg = eq == std::string::npos ? "" : src.select.substr(eq + 1);
  try {
    if (kind == "topk") return select_teachers_topk(archive, std::stod(arg));
    if (kind == "spread") return select_teachers_spread(archive, std::stoi(arg));
  } catch (const std::logic_error&) {
    throw ConfigError("bad --select argument '" + src.select + "'");
  }
  throw ConfigError("unknown selection '" + src.select + "' (all, topk=F, spread=K, fixtures)");
}

// --- subcommands -----------------------------------------------------------

struct QdArgs {
  Common common;
  std::optional<int> generations;
  std::string resume;
  int log_every = 100;
};

void cmd_qd(QdArgs& a, std::ostream& out) {
  std::optional<EliteArchive> resumed;
  if (!a.resume.empty()) {
    if (a.common.config_path.empty()) a.common.config_path = (fs::path(a.resume) / "config.txt").string();
    if (a.common.out.empty()) a.common.out = a.resume;
    resumed = load_archive(a.resume);
  }
  if (a.common.out.empty()) throw ConfigError("qd needs --out (or --resume)");
  if (a.generations) a.common.overrides.emplace_back("qd.generations", std::to_string(*a.generations));
  const RunConfig config = build_config(a.common);
  const std::uint64_t hash = config.hash();
  if (resumed && resumed->config_hash != hash) {
    throw ConfigError("archive in " + a.resume + " was produced under a different config (hash " +
                      std::to_string(resumed->config_hash) + ", now " + std::to_string(hash) + ")");
  }
  prepare_out(a.common.out, config);

  const int every = std::max(a.log_every, 1);
  const auto on_generation = [&](const EliteArchive& archive, const GenerationLog& g) {
    if (g.generation % every != 0) return;
    out << "generation " << g.generation << " occupancy " << g.occupancy << " best " << g.best << " qd " << g.qd_score
        << '\n'
        << std::flush;
    EliteArchive snapshot = archive;
    snapshot.config_hash = hash;
    save_archive(a.common.out, snapshot);
  };
  EliteArchive archive =
      map_elites_run(config.qd, config.eval, config.seed, resumed ? &*resumed : nullptr, on_generation);
  archive.config_hash = hash;
  save_archive(a.common.out, archive);

  json report = report_header("qd", config);
  report["seeds"]["map_elites"] = config.seed;
  report["generations"] = archive.generation;
  report["occupancy"] = archive.occupancy();
  report["best"] = archive.best().fitness;
  report["qd_score"] = archive.qd_score();
  report["migrations"] = archive.migrations;
  if (resumed) report["resumed_from_generation"] = resumed->generation;
  write_json(a.common.out, "report.json", report);
  out << "archive " << a.common.out << " occupancy " << archive.occupancy() << " best " << archive.best().fitness
      << '\n';
}

struct DistillArgs {
  Common common;
  TeacherSource source;
  std::string arch;
  std::string dataset;
  std::optional<int> steps;
};

void cmd_distill(DistillArgs& a, std::ostream& out) {
  if (!a.arch.empty()) a.common.overrides.emplace_back("student.arch", a.arch);
  if (a.steps) a.common.overrides.emplace_back("train.steps", std::to_string(*a.steps));
  RunConfig config = build_config(a.common);
  prepare_out(a.common.out, config);
  json report = report_header("distill", config);

  std::unique_ptr<RecordSource> data;
  if (!a.dataset.empty() && fs::exists(a.dataset)) {
    auto file = std::make_unique<DatasetFile>(a.dataset);
    report["dataset"] = {{"path", a.dataset}, {"cached", true}, {"config_hash", file->config_hash()}};
    data = std::move(file);
  } else {
    const std::vector<Individual> teachers = resolve_teachers(a.source, config, a.common.out, out, report);
    if (teachers.empty()) throw EmptyArchive("teacher selection is empty");
    const NoiseConfig noise{config.eval.obs_noise_std, config.eval.act_noise_std,
                            derive_seed(config.seed, kCollectStream)};
    report["seeds"]["collect"] = noise.seed;
    auto collected = std::make_unique<DistillDataset>(collect_dataset(teachers, config.episodes_per_teacher, noise,
                                                                      config.eval.world, config.eval.workers));
    const std::string path = a.dataset.empty() ? (fs::path(a.common.out) / "dataset.vdds").string() : a.dataset;
    save_dataset(path, *collected, config.hash());
    report["teachers"] = teachers.size();
    report["dataset"] = {{"path", path},
                         {"cached", false},
                         {"config_hash", config.hash()},
                         {"failed_episodes", collected->failed_episodes}};
    data = std::move(collected);
  }
  if (data->size() == 0) throw EmptyDataset("dataset has no records");
  report["dataset"]["records"] = data->size();
  report["dataset"]["morphologies"] = data->morphologies().size();
  out << "dataset " << data->size() << " records over " << data->morphologies().size() << " bodies\n";

  TrainConfig train = config.train;
  train.seed = derive_seed(config.seed, kTrainStream);
  report["seeds"]["train"] = train.seed;
  const TrainResult r = train_student(*data, config.student_arch, config.student_hyper, train);
  save_checkpoint((fs::path(a.common.out) / "student.ckpt").string(), r.student, config.hash());
  {
    std::ofstream f(fs::path(a.common.out) / "loss.csv", std::ios::trunc);
    f << "step,loss\n";
    f.precision(10);
    for (std::size_t i = 0; i < r.loss_curve.size(); ++i) f << r.loss_steps[i] << ',' << r.loss_curve[i] << '\n';
    if (!f) throw FormatError("failed writing loss.csv");
  }
  report["student"] = {{"arch", arch_name(config.student_arch)},
                       {"params", r.student.params.size()},
                       {"steps", train.steps},
                       {"final_loss", r.loss_curve.empty() ? 0.0 : r.loss_curve.back()}};
  write_json(a.common.out, "report.json", report);
  out << "student " << arch_name(config.student_arch) << " final loss "
      << (r.loss_curve.empty() ? 0.0 : r.loss_curve.back()) << '\n';
}

struct EvalArgs {
  Common common;
  TeacherSource source;
  std::string student;
  std::optional<int> reps;
};

void cmd_eval(EvalArgs& a, std::ostream& out) {
  if (a.reps) a.common.overrides.emplace_back("eval.reps", std::to_string(*a.reps));
  const RunConfig config = build_config(a.common);
  prepare_out(a.common.out, config);
  json report = report_header("eval", config);
  const ControllerSpec student = load_checkpoint(a.student);
  const std::vector<Individual> teachers = resolve_teachers(a.source, config, a.common.out, out, report);
  if (teachers.empty()) throw EmptyArchive("teacher selection is empty");
  const std::uint64_t seed = derive_seed(config.seed, kEvalStream);
  report["seeds"]["eval"] = seed;
  const EvalReport r = relative_performance(teachers, student, config.eval, seed);
  write_report_csv(a.common.out, "eval.csv", r);

  report["student"] = a.student;
  report["reps"] = config.eval.reps;
  report["morphologies"] = r.rows.size();
  report["undefined"] = r.undefined;
  report["mean_relative"] = r.mean_relative;
  report["se_relative"] = r.se_relative;
  const std::vector<double> rel = r.relatives();
  for (const Alternative alt : {Alternative::TwoSided, Alternative::Less}) {
    try {
      report["t_test_vs_1"][std::string(alternative_name(alt))] = stat_json(one_sample_t_test(rel, 1.0, alt));
    } catch (const DegenerateSample& e) {
      report["t_test_vs_1"][std::string(alternative_name(alt))] = {{"undefined", e.what()}};
    }
  }
  write_json(a.common.out, "report.json", report);
  out << "mean relative performance " << r.mean_relative << " +- " << r.se_relative << " over " << rel.size()
      << " bodies\n";
}

struct GeneralizeArgs {
  Common common;
  std::string archive;
  std::string student;
  int pairs = 30;
  int min_bodies = 0;
};

void cmd_generalize(GeneralizeArgs& a, std::ostream& out) {
  const RunConfig config = build_config(a.common);
  prepare_out(a.common.out, config);
  json report = report_header("generalize", config);
  const EliteArchive archive = load_archive(a.archive);
  const ControllerSpec student = load_checkpoint(a.student);
  EvalSettings eval = config.eval;
  eval.reps = config.generalization_reps;
  const std::uint64_t seed = derive_seed(config.seed, kGeneralizeStream);
  report["seeds"]["generalize"] = seed;
  const GeneralizationReport r =
      unseen_generalization(archive, student, a.pairs, eval, seed, static_cast<std::size_t>(std::max(a.min_bodies, 0)));
  write_report_csv(a.common.out, "generalize.csv", r);
  report["archive"] = a.archive;
  report["student"] = a.student;
  report["reps"] = eval.reps;
  report["pairs"] = r.pairs;
  report["bodies"] = r.rows.size();
  report["wins"] = r.wins;
  report["win_rate"] = r.win_rate();
  report["mean_ratio"] = r.mean_ratio;
  report["se_ratio"] = r.se_ratio;
  report["ratio_test"] = r.test_defined ? stat_json(r.ratio_test) : json{{"undefined", true}};
  report["significant_at_0.05"] = r.test_defined && r.ratio_test.p_value < 0.05;
  write_json(a.common.out, "report.json", report);
  out << "unseen bodies " << r.rows.size() << " student wins " << r.wins << " mean ratio " << r.mean_ratio;
  if (r.test_defined) out << " p " << r.ratio_test.p_value;
  out << '\n';
}

struct FinetuneArgs {
  Common common;
  std::string archive;
  std::string student;
  int bodies = 20;
  std::optional<int> generations;
  double fraction = 0.95;
};

void cmd_finetune(FinetuneArgs& a, std::ostream& out) {
  if (a.generations) a.common.overrides.emplace_back("afpo.generations", std::to_string(*a.generations));
  const RunConfig config = build_config(a.common);
  if (!(a.fraction > 0.0 && a.fraction <= 1.0)) throw ConfigError("--fraction must lie in (0, 1]");
  prepare_out(a.common.out, config);
  json report = report_header("finetune", config);
  const EliteArchive archive = load_archive(a.archive);
  const ControllerSpec student = load_checkpoint(a.student);
  const std::uint64_t seed = derive_seed(config.seed, kFinetuneStream);
  report["seeds"]["finetune"] = seed;
  const FinetuneReport r =
      finetune_experiment(archive, student, a.bodies, config.afpo.generations, config.eval, seed, a.fraction);
  write_report_csv(a.common.out, "finetune.csv", r);
  report["archive"] = a.archive;
  report["student"] = a.student;
  report["bodies"] = r.rows.size();
  report["generations"] = config.afpo.generations;
  report["fraction"] = r.fraction;
  report["median_student_generation"] = r.median_student;
  report["median_baseline_generation"] = r.median_baseline;
  if (!r.rows.empty()) report["wilcoxon"] = stat_json(r.wilcoxon);
  write_json(a.common.out, "report.json", report);
  out << "median convergence generation student " << r.median_student << " baseline " << r.median_baseline << '\n';
}

struct JointArgs {
  Common common;
  std::string fixtures = "biped,worm,triped,block";
  std::optional<int> generations;
};

void cmd_joint(JointArgs& a, std::ostream& out) {
  if (a.generations) a.common.overrides.emplace_back("afpo.generations", std::to_string(*a.generations));
  const RunConfig config = build_config(a.common);
  std::vector<std::string> names;
  std::vector<MorphologyGrid> bodies;
  std::stringstream ss(a.fixtures);
  for (std::string name; std::getline(ss, name, ',');) {
    if (name.empty()) continue;
    try {
      bodies.push_back(fixture(name));
    } catch (const Error&) {
      throw ConfigError("unknown fixture '" + name + "'");
    }
    names.push_back(name);
  }
  if (bodies.empty()) throw ConfigError("--fixtures lists no bodies");
  prepare_out(a.common.out, config);
  json report = report_header("joint", config);
  const std::uint64_t seed = derive_seed(config.seed, kJointStream);
  report["seeds"]["joint"] = seed;

  AfpoConfig afpo = config.afpo;
  afpo.fitness_mode = FitnessMode::JointMin;
  const AfpoResult r = afpo_run(afpo, bodies, config.eval, seed);
  save_checkpoint((fs::path(a.common.out) / "champion.ckpt").string(), r.champion.controller, config.hash());
  {
    std::ofstream f(fs::path(a.common.out) / "trajectory.csv", std::ios::trunc);
    f << "generation,best_min_fitness\n";
    f.precision(10);
    for (std::size_t g = 0; g < r.trajectory.size(); ++g) f << g << ',' << r.trajectory[g] << '\n';
    if (!f) throw FormatError("failed writing trajectory.csv");
  }
  report["fixtures"] = names;
  report["generations"] = afpo.generations;
  report["champion_min_fitness"] = r.champion.fitness;
  json per = json::object();
  for (std::size_t i = 0; i < names.size() && i < r.champion.per_morphology.size(); ++i) {
    per[names[i]] = r.champion.per_morphology[i];
  }
  report["champion_per_fixture"] = per;
  write_json(a.common.out, "report.json", report);
  out << "joint champion min fitness " << r.champion.fitness << '\n';
}

void print_grid(std::ostream& out, const MorphologyGrid& g, const std::string& indent) {
  std::istringstream rows(format_grid(g));
  for (std::string line; std::getline(rows, line);) out << indent << line << '\n';
}

void inspect_archive(const std::string& dir, std::ostream& out) {
  const EliteArchive a = load_archive(dir);
  out << "archive " << dir << "\n  generation " << a.generation << "  occupancy " << a.occupancy() << "/"
      << kArchiveCells << "  qd score " << a.qd_score() << "  migrations " << a.migrations << "  seed " << a.seed
      << "  config hash " << a.config_hash << '\n';
  if (a.cells.empty()) return;
  out << "  occupancy map (rows: voxels 1..25, columns: active 0..25)\n";
  for (int v = 1; v <= kSlots; ++v) {
    out << "  " << std::setw(2) << v << ' ';
    for (int act = 0; act < kActiveBins; ++act) {
      if (act > v) {
        out << ' ';
      } else {
        out << (a.cells.count(cell_index({v, act})) != 0 ? '#' : '.');
      }
    }
    out << '\n';
  }
  std::vector<const Individual*> sorted;
  for (const auto& [cell, ind] : a.cells) sorted.push_back(&ind);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Individual* x, const Individual* y) { return x->fitness > y->fitness; });
  const std::size_t show = std::min<std::size_t>(sorted.size(), 3);
  for (std::size_t i = 0; i < show; ++i) {
    const Descriptor d = descriptor(sorted[i]->grid);
    out << "  #" << i + 1 << " fitness " << sorted[i]->fitness << " voxels " << d.n_voxels << " active "
        << d.n_active << '\n';
    print_grid(out, sorted[i]->grid, "     ");
  }
}

void inspect_path(const std::string& path, std::ostream& out) {
  if (fs::is_directory(path)) {
    if (fs::exists(fs::path(path) / "manifest.json")) return inspect_archive(path, out);
    if (fs::exists(fs::path(path) / "teachers.json")) {
      std::uint64_t hash = 0;
      const std::vector<Individual> t = load_teachers(path, &hash);
      out << "teachers " << path << "  count " << t.size() << "  config hash " << hash << '\n';
      for (const Individual& ind : t) {
        out << "  fitness " << ind.fitness << "  " << arch_name(ind.controller.arch) << '\n';
        print_grid(out, ind.grid, "    ");
      }
      return;
    }
    throw FormatError("'" + path + "' is neither an archive nor a teacher directory");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  const std::string tag(magic, static_cast<std::size_t>(in.gcount()));
  in.close();
  if (tag == "VDCK") {
    std::uint64_t hash = 0;
    const ControllerSpec spec = load_checkpoint(path, &hash);
    double norm = 0.0;
    for (const double p : spec.params) norm += p * p;
    out << "checkpoint " << path << "\n  arch " << arch_name(spec.arch) << "  params " << spec.params.size()
        << "  l2 norm " << std::sqrt(norm) << "  config hash " << hash << "\n  hidden " << spec.hyper.hidden
        << "  layers " << spec.hyper.layers << "  model_dim " << spec.hyper.model_dim << "  heads "
        << spec.hyper.heads << "  ff_dim " << spec.hyper.ff_dim << '\n';
    return;
  }
  if (tag == "VDDS") {
    const DatasetFile data(path);
    out << "dataset " << path << "\n  records " << data.size() << "  bodies " << data.morphologies().size()
        << "  config hash " << data.config_hash() << '\n';
    for (const MorphologyGrid& g : data.morphologies()) out << "  " << one_line(g) << '\n';
    return;
  }
  std::ifstream text(path);
  std::ostringstream ss;
  ss << text.rdbuf();
  if (ss.str().find('=') != std::string::npos) {
    const RunConfig cfg = parse_config(ss.str());
    out << "config " << path << "\n  profile " << cfg.profile << "  seed " << cfg.seed << "  hash " << cfg.hash()
        << '\n';
    return;
  }
  const MorphologyGrid g = parse_grid(ss.str());
  const Descriptor d = descriptor(g);
  out << "grid " << path << "\n  voxels " << d.n_voxels << "  active " << d.n_active << "  connected "
      << (is_connected(g) ? "yes" : "no") << "  cell " << (is_connected(g) ? cell_index(d) : -1) << '\n';
  print_grid(out, g, "  ");
}

std::string_view kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
      return "config";
    case ErrorKind::Data:
      return "data";
    case ErrorKind::Numerical:
      return "numerical";
  }
  return "unknown";
}

void report_error(std::ostream& err, std::string_view name, std::string_view kind, const std::string& message,
                  int code) {
  err << json{{"error", name}, {"kind", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
}

}  // namespace

int exit_code(const Error& e) {
  if (e.name() == "EmptyArchive") return kExitEmptyArchive;
  if (e.name() == "EmptyDataset") return kExitEmptyDataset;
  switch (e.kind()) {
    case ErrorKind::Config:
      return kExitConfig;
    case ErrorKind::Data:
      return kExitData;
    case ErrorKind::Numerical:
      return kExitNumerical;
  }
  return kExitData;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quality-diversity evolution and policy distillation for voxel soft robots", "voxdistill"};
  app.require_subcommand(1);

  QdArgs qd;
  CLI::App* qd_cmd = app.add_subcommand("qd", "run or resume MAP-Elites over bodies and controllers");
  add_common(qd_cmd, qd.common, false);
  qd_cmd->add_option("--out", qd.common.out, "archive directory");
  qd_cmd->add_option("--generations", qd.generations, "target generation count");
  qd_cmd->add_option("--resume", qd.resume, "archive directory to continue");
  qd_cmd->add_option("--log-every", qd.log_every, "progress and checkpoint stride");

  DistillArgs distill;
  CLI::App* distill_cmd = app.add_subcommand("distill", "collect teacher data and train one student");
  add_common(distill_cmd, distill.common);
  add_teacher_source(distill_cmd, distill.source);
  distill_cmd->add_option("--arch", distill.arch, "global_fc | modular_fc | global_tx");
  distill_cmd->add_option("--dataset", distill.dataset, "dataset cache; reused when it exists");
  distill_cmd->add_option("--steps", distill.steps, "training steps");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "student versus teachers on the teachers' bodies");
  add_common(eval_cmd, ev.common);
  add_teacher_source(eval_cmd, ev.source);
  eval_cmd->add_option("--student", ev.student, "student checkpoint")->required();
  eval_cmd->add_option("--reps", ev.reps, "episodes per body and controller");

  GeneralizeArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("generalize", "student versus closest-occupant baseline on unseen bodies");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--archive", gen.archive, "archive directory")->required();
  gen_cmd->add_option("--student", gen.student, "student checkpoint")->required();
  gen_cmd->add_option("--pairs", gen.pairs, "occupant pairs to interpolate between");
  gen_cmd->add_option("--min-bodies", gen.min_bodies, "keep drawing pairs until this many bodies");

  FinetuneArgs ft;
  CLI::App* ft_cmd = app.add_subcommand("finetune", "warm-started evolution from student and baseline");
  add_common(ft_cmd, ft.common);
  ft_cmd->add_option("--archive", ft.archive, "archive directory")->required();
  ft_cmd->add_option("--student", ft.student, "student checkpoint")->required();
  ft_cmd->add_option("--bodies", ft.bodies, "unseen bodies");
  ft_cmd->add_option("--generations", ft.generations, "generations per run");
  ft_cmd->add_option("--fraction", ft.fraction, "convergence threshold as a fraction of the final fitness");

  JointArgs joint;
  CLI::App* joint_cmd = app.add_subcommand("joint", "one controller evolved on several bodies (min fitness)");
  add_common(joint_cmd, joint.common);
  joint_cmd->add_option("--fixtures", joint.fixtures, "comma separated fixture names");
  joint_cmd->add_option("--generations", joint.generations, "AFPO generations");

  std::vector<std::string> inspect_paths;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "describe archives, teacher sets, checkpoints, datasets, grids");
  inspect_cmd->add_option("path", inspect_paths, "files or directories")->required();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      throw ConfigError(e.what());
    }

    if (qd_cmd->parsed()) cmd_qd(qd, out);
    if (distill_cmd->parsed()) cmd_distill(distill, out);
    if (eval_cmd->parsed()) cmd_eval(ev, out);
    if (gen_cmd->parsed()) cmd_generalize(gen, out);
    if (ft_cmd->parsed()) cmd_finetune(ft, out);
    if (joint_cmd->parsed()) cmd_joint(joint, out);
    if (inspect_cmd->parsed()) {
      for (const std::string& p : inspect_paths) inspect_path(p, out);
    }
    return kExitOk;
  } catch (const Error& e) {
    const int code = exit_code(e);
    report_error(err, e.name(), kind_name(e.kind()), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    report_error(err, "IOError", "data", e.what(), kExitData);
    return kExitData;
  }
}

}  // namespace voxdistill
