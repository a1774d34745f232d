#include "voxdistill/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "voxdistill/parallel.hpp"

namespace voxdistill {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <class T>
std::string fmt_int(T v) {
  return std::to_string(v);
}

double parse_double(std::string_view key, std::string_view text) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(text) + "'");
  }
  return v;
}

template <class T>
T parse_int(std::string_view key, std::string_view text) {
  T v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("'" + std::string(key) + "' expects an integer, got '" + std::string(text) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
  bool hashed = true;
};

#define VD_DOUBLE(name, member)                                                          \
  Field {                                                                                \
    name, [](const RunConfig& c) { return fmt(c.member); },                              \
        [](RunConfig& c, std::string_view v) { c.member = parse_double(name, v); }       \
  }
#define VD_INT(name, member)                                                                            \
  Field {                                                                                               \
    name, [](const RunConfig& c) { return fmt_int(c.member); },                                        \
        [](RunConfig& c, std::string_view v) { c.member = parse_int<decltype(c.member)>(name, v); }   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f{
        VD_INT("seed", seed),
        VD_DOUBLE("world.gravity", eval.world.gravity),
        VD_DOUBLE("world.dt", eval.world.dt),
        VD_INT("world.substeps_per_control", eval.world.substeps_per_control),
        VD_INT("world.episode_steps", eval.world.episode_steps),
        VD_INT("world.terrain_length", eval.world.terrain.length_voxels),
        VD_DOUBLE("world.bridge_segment_stiffness", eval.world.terrain.bridge_segment_stiffness),
        VD_DOUBLE("world.bridge_anchor_left", eval.world.terrain.bridge_anchor_positions.first),
        VD_DOUBLE("world.bridge_anchor_right", eval.world.terrain.bridge_anchor_positions.second),
        VD_DOUBLE("world.friction_coeff", eval.world.friction_coeff),
        VD_DOUBLE("world.ground_stiffness", eval.world.ground_stiffness),
        VD_DOUBLE("world.ground_damping", eval.world.ground_damping),
        VD_DOUBLE("world.damping_ratio", eval.world.damping_ratio),
        VD_DOUBLE("world.voxel_mass", eval.world.voxel_mass),
        VD_DOUBLE("world.elastic_stiffness", eval.world.elastic_stiffness),
        VD_DOUBLE("world.rigid_stiffness_factor", eval.world.rigid_stiffness_factor),
        VD_DOUBLE("world.start_x", eval.world.start_x),
        VD_DOUBLE("world.blowup_bound", eval.world.blowup_bound),
        VD_DOUBLE("noise.obs_std", eval.obs_noise_std),
        VD_DOUBLE("noise.act_std", eval.act_noise_std),
        VD_INT("eval.reps", eval.reps),
        VD_INT("eval.generalization_reps", generalization_reps),
        VD_INT("controller.hidden", hyper.hidden),
        VD_INT("controller.layers", hyper.layers),
        VD_INT("controller.model_dim", hyper.model_dim),
        VD_INT("controller.heads", hyper.heads),
        VD_INT("controller.ff_dim", hyper.ff_dim),
        VD_INT("student.hidden", student_hyper.hidden),
        VD_INT("student.layers", student_hyper.layers),
        VD_INT("student.model_dim", student_hyper.model_dim),
        VD_INT("student.heads", student_hyper.heads),
        VD_INT("student.ff_dim", student_hyper.ff_dim),
        VD_INT("afpo.pop_size", afpo.pop_size),
        VD_INT("afpo.generations", afpo.generations),
        VD_DOUBLE("afpo.param_mutation_std", afpo.param_mutation_std),
        VD_INT("qd.generations", qd.generations),
        VD_INT("qd.batch", qd.batch),
        VD_INT("qd.initial", qd.initial),
        VD_DOUBLE("qd.morph_mutation_rate", qd.morph_mutation_rate),
        VD_DOUBLE("qd.param_mutation_std", qd.param_mutation_std),
        VD_INT("train.steps", train.steps),
        VD_INT("train.batch_size", train.batch_size),
        VD_DOUBLE("train.learning_rate", train.learning_rate),
        VD_DOUBLE("train.adam_beta1", train.adam_beta1),
        VD_DOUBLE("train.adam_beta2", train.adam_beta2),
        VD_DOUBLE("train.adam_eps", train.adam_eps),
        VD_INT("train.log_every", train.log_every),
        VD_INT("distill.episodes_per_teacher", episodes_per_teacher),
    };
    f.push_back({"world.terrain",
                 [](const RunConfig& c) {
                   return std::string(c.eval.world.terrain.kind == TerrainKind::Bridge ? "bridge" : "flat");
                 },
                 [](RunConfig& c, std::string_view v) {
                   if (v == "flat") {
                     c.eval.world.terrain.kind = TerrainKind::Flat;
                   } else if (v == "bridge") {
                     c.eval.world.terrain.kind = TerrainKind::Bridge;
                   } else {
                     throw ConfigError("world.terrain must be flat or bridge");
                   }
                 }});
    f.push_back({"controller.arch", [](const RunConfig& c) { return std::string(arch_name(c.arch)); },
                 [](RunConfig& c, std::string_view v) { c.arch = parse_arch(v); }});
    f.push_back({"student.arch", [](const RunConfig& c) { return std::string(arch_name(c.student_arch)); },
                 [](RunConfig& c, std::string_view v) { c.student_arch = parse_arch(v); }});
    f.push_back({"eval.workers", [](const RunConfig& c) { return fmt_int(c.eval.workers); },
                 [](RunConfig& c, std::string_view v) { c.eval.workers = parse_int<int>("eval.workers", v); },
                 false});
    // A run to N generations is a prefix of a run to M > N, so the target
    // generation count does not identify the results.
    for (Field& x : f) {
      if (x.key == "qd.generations") x.hashed = false;
    }
    std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
    return f;
  }();
  return table;
}

#undef VD_DOUBLE
#undef VD_INT

const Field& field(std::string_view key) {
  for (const Field& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

RunConfig RunConfig::defaults(std::string_view profile) {
  RunConfig c;
  c.eval.workers = default_workers();
  if (profile == "desk") {
    c.profile = "desk";
    c.eval.world.terrain.length_voxels = 40;
    c.qd.generations = 2000;
    c.train.steps = 10000;
    c.afpo.generations = 300;
    c.episodes_per_teacher = 100;
  } else if (profile == "paper") {
    c.profile = "paper";
    c.eval.world.terrain.length_voxels = 100;
    c.qd.generations = 20000;
    c.train.steps = 100000;
    c.afpo.generations = 300;
    c.episodes_per_teacher = 100;
  } else {
    throw ConfigError("unknown profile '" + std::string(profile) + "' (expected desk or paper)");
  }
  c.qd.arch = c.arch;
  c.qd.hyper = c.hyper;
  c.afpo.arch = c.arch;
  c.afpo.hyper = c.hyper;
  return c;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "profile") {
    if (value != profile) throw ConfigError("profile must be selected before any other key");
    return;
  }
  field(key).set(*this, value);
  qd.arch = afpo.arch = arch;
  qd.hyper = afpo.hyper = hyper;
}

std::string RunConfig::get(std::string_view key) const {
  if (key == "profile") return profile;
  return field(key).get(*this);
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out{"profile"};
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  out << "profile = " << profile << '\n';
  for (const Field& f : fields()) out << f.key << " = " << f.get(*this) << '\n';
  return out.str();
}

std::uint64_t RunConfig::hash() const {
  std::string canon = "profile=" + profile + "\n";
  for (const Field& f : fields()) {
    if (f.hashed) canon += f.key + "=" + f.get(*this) + "\n";
  }
  return fnv1a64(canon);
}

void RunConfig::validate() const {
  eval.world.validate();
  if (eval.reps < 1 || generalization_reps < 1) throw ConfigError("repetition counts must be at least 1");
  if (eval.workers < 1) throw ConfigError("eval.workers must be at least 1");
  if (!(eval.obs_noise_std >= 0.0 && eval.act_noise_std >= 0.0)) throw ConfigError("noise std must be >= 0");
  if (episodes_per_teacher < 1) throw ConfigError("distill.episodes_per_teacher must be at least 1");
  afpo.validate();
  qd.validate();
  train.validate();
  validate_hyper(arch, hyper);
  validate_hyper(student_arch, student_hyper);
}

RunConfig parse_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> lines;
  std::size_t pos = 0;
  int number = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++number;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(number) + " is not 'key = value'");
    }
    lines.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  std::string profile = "desk";
  std::size_t first = 0;
  if (!lines.empty() && lines.front().first == "profile") {
    profile = lines.front().second;
    first = 1;
  }
  RunConfig c = RunConfig::defaults(profile);
  for (std::size_t i = first; i < lines.size(); ++i) c.set(lines[i].first, lines[i].second);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const std::string& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config file '" + path + "'");
  out << "# config hash " << config.hash() << '\n' << config.serialize();
}

}  // namespace voxdistill
