#include "voxdistill/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "binary_io.hpp"
#include "voxdistill/parallel.hpp"

namespace voxdistill {

namespace {

constexpr char kDatasetMagic[5] = "VDDS";
constexpr std::uint64_t kBatchStream = 0x62617463ULL;
constexpr std::uint64_t kInitStream = 0x696e6974ULL;

constexpr std::streamoff kRecordBytes = 4 + 8 * (1 + kSlots * kDynamicFeatures + kSlots);

void write_record(std::ostream& out, const DistillRecord& r) {
  io::put_u32(out, r.morphology_id);
  io::put_f64(out, r.time_signal);
  for (double v : r.dynamic) io::put_f64(out, v);
  for (double v : r.action.values) io::put_f64(out, v);
}

void read_record(std::istream& in, DistillRecord& r) {
  r.morphology_id = io::get_u32(in);
  r.time_signal = io::get_f64(in);
  for (double& v : r.dynamic) v = io::get_f64(in);
  for (double& v : r.action.values) v = io::get_f64(in);
}

// Shared header reader: leaves the stream at the first record.
void read_header(std::istream& in, std::vector<MorphologyGrid>& index, std::uint64_t& count, std::uint64_t& hash) {
  io::expect_magic(in, kDatasetMagic, "dataset");
  io::expect_version(io::get_u32(in), kDatasetVersion, "dataset");
  const std::uint32_t slots = io::get_u32(in);
  const std::uint32_t features = io::get_u32(in);
  const std::uint32_t dynamic = io::get_u32(in);
  if (slots != kSlots || features != kSlotFeatures || dynamic != kDynamicFeatures) {
    throw FormatError("dataset slot layout does not match this build");
  }
  hash = io::get_u64(in);
  const std::uint32_t n_grids = io::get_u32(in);
  if (n_grids > (1u << 20)) throw FormatError("implausible morphology count in dataset");
  index.resize(n_grids);
  for (MorphologyGrid& g : index) {
    char cells[kSlots];
    if (!in.read(cells, kSlots)) throw FormatError("unexpected end of file");
    for (int s = 0; s < kSlots; ++s) {
      const int m = cells[s];
      if (m < 0 || m >= kNumMaterials) throw FormatError("invalid material code in dataset");
      g.cells[static_cast<std::size_t>(s)] = static_cast<Material>(m);
    }
  }
  count = io::get_u64(in);
}

}  // namespace

ObservationFrame expand(const DistillRecord& record, const MorphologyGrid& grid) {
  ObservationFrame obs;
  obs.time_signal = record.time_signal;
  for (int s = 0; s < kSlots; ++s) {
    const auto i = static_cast<std::size_t>(s);
    if (!grid.occupied(s)) continue;
    obs.valid_mask[i] = true;
    double* f = obs.slot(s);
    for (int k = 0; k < kDynamicFeatures; ++k) f[k] = record.dynamic[i * kDynamicFeatures + static_cast<std::size_t>(k)];
    f[kDynamicFeatures + static_cast<int>(grid.cells[i])] = 1.0;
  }
  return obs;
}

DistillRecord compress(std::uint32_t morphology_id, const ObservationFrame& obs, const ActionVector& action) {
  DistillRecord r;
  r.morphology_id = morphology_id;
  r.time_signal = obs.time_signal;
  for (int s = 0; s < kSlots; ++s) {
    const double* f = obs.slot(s);
    for (int k = 0; k < kDynamicFeatures; ++k) r.dynamic[static_cast<std::size_t>(s * kDynamicFeatures + k)] = f[k];
  }
  r.action = action;
  return r;
}

std::uint32_t DistillDataset::add_morphology(const MorphologyGrid& grid) {
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] == grid) return static_cast<std::uint32_t>(i);
  }
  index.push_back(grid);
  return static_cast<std::uint32_t>(index.size() - 1);
}

void DistillDataset::check() const {
  for (const DistillRecord& r : records) {
    if (r.morphology_id >= index.size()) throw FormatError("record refers to an unknown morphology");
    const MorphologyGrid& g = index[r.morphology_id];
    for (int s = 0; s < kSlots; ++s) {
      if (!g.occupied(s)) continue;
      const double a = r.action.values[static_cast<std::size_t>(s)];
      if (!(a >= kActionMin && a <= kActionMax)) throw FormatError("record action outside [0.6, 1.6]");
    }
  }
}

DistillDataset collect_dataset(const std::vector<Individual>& teachers, int episodes_per_teacher,
                               const NoiseConfig& noise, const WorldConfig& world, int workers) {
  if (episodes_per_teacher < 1) throw ConfigError("episodes per teacher must be at least 1");
  DistillDataset data;
  std::vector<std::uint32_t> ids;
  for (const Individual& t : teachers) {
    validate(t.controller);
    ids.push_back(data.add_morphology(t.grid));
  }
  const auto episodes = static_cast<std::size_t>(episodes_per_teacher);
  std::vector<EpisodeResult> results(teachers.size() * episodes);
  parallel_for(results.size(), workers, [&](std::size_t task) {
    const std::size_t t = task / episodes;
    const std::size_t e = task % episodes;
    const NoiseConfig ep{noise.obs_noise_std, noise.act_noise_std, derive_seed(noise.seed, t, e)};
    results[task] = run_episode(teachers[t].grid, teachers[t].controller, world, ep, true);
  });
  std::size_t total = 0;
  for (const EpisodeResult& r : results) total += r.failed ? 0 : r.records.size();
  data.records.reserve(total);
  for (std::size_t task = 0; task < results.size(); ++task) {
    const EpisodeResult& r = results[task];
    if (r.failed) {
      ++data.failed_episodes;
      continue;
    }
    const std::uint32_t id = ids[task / episodes];
    for (const StepRecord& sr : r.records) data.records.push_back(compress(id, sr.obs, sr.action));
  }
  return data;
}

DistillDataset merge_datasets(const std::vector<const DistillDataset*>& parts) {
  DistillDataset out;
  std::size_t total = 0;
  for (const DistillDataset* p : parts) total += p->records.size();
  out.records.reserve(total);
  for (const DistillDataset* p : parts) {
    std::vector<std::uint32_t> remap;
    for (const MorphologyGrid& g : p->index) remap.push_back(out.add_morphology(g));
    for (DistillRecord r : p->records) {
      r.morphology_id = remap.at(r.morphology_id);
      out.records.push_back(r);
    }
    out.failed_episodes += p->failed_episodes;
  }
  return out;
}

std::vector<std::vector<std::size_t>> champion_combinations(const std::vector<std::size_t>& counts) {
  std::vector<std::vector<std::size_t>> out;
  if (counts.empty()) return out;
  for (std::size_t c : counts) {
    if (c == 0) return out;
  }
  std::vector<std::size_t> pick(counts.size(), 0);
  while (true) {
    out.push_back(pick);
    std::size_t m = counts.size();
    while (m > 0) {
      --m;
      if (++pick[m] < counts[m]) break;
      pick[m] = 0;
      if (m == 0) return out;
    }
  }
}

std::vector<DistillDataset> combo_datasets(const std::vector<std::vector<DistillDataset>>& per_champion) {
  std::vector<std::size_t> counts;
  for (const auto& champs : per_champion) counts.push_back(champs.size());
  std::vector<DistillDataset> out;
  for (const auto& pick : champion_combinations(counts)) {
    std::vector<const DistillDataset*> parts;
    for (std::size_t m = 0; m < pick.size(); ++m) parts.push_back(&per_champion[m][pick[m]]);
    out.push_back(merge_datasets(parts));
  }
  return out;
}

void save_dataset(const std::string& path, const DistillDataset& data, std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  io::put_magic(out, kDatasetMagic);
  io::put_u32(out, kDatasetVersion);
  io::put_u32(out, kSlots);
  io::put_u32(out, kSlotFeatures);
  io::put_u32(out, kDynamicFeatures);
  io::put_u64(out, config_hash);
  io::put_u32(out, static_cast<std::uint32_t>(data.index.size()));
  for (const MorphologyGrid& g : data.index) {
    for (Material m : g.cells) out.put(static_cast<char>(m));
  }
  io::put_u64(out, data.records.size());
  for (const DistillRecord& r : data.records) write_record(out, r);
  if (!out) throw FormatError("failed writing '" + path + "'");
}

DistillDataset load_dataset(const std::string& path, std::uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  DistillDataset data;
  std::uint64_t count = 0;
  std::uint64_t hash = 0;
  read_header(in, data.index, count, hash);
  if (config_hash != nullptr) *config_hash = hash;
  data.records.resize(static_cast<std::size_t>(count));
  for (DistillRecord& r : data.records) read_record(in, r);
  data.check();
  return data;
}

void export_csv(std::ostream& out, const DistillDataset& data, std::size_t max_rows) {
  out << "record,morphology_id,time_signal";
  for (int s = 0; s < kSlots; ++s) out << ",volume_" << s << ",vx_" << s << ",vy_" << s;
  for (int s = 0; s < kSlots; ++s) out << ",action_" << s;
  out << '\n';
  std::ostringstream line;
  line.precision(10);
  const std::size_t n = std::min(max_rows, data.records.size());
  for (std::size_t i = 0; i < n; ++i) {
    const DistillRecord& r = data.records[i];
    line.str("");
    line << i << ',' << r.morphology_id << ',' << r.time_signal;
    for (double v : r.dynamic) line << ',' << v;
    for (double v : r.action.values) line << ',' << v;
    out << line.str() << '\n';
  }
}

DatasetFile::DatasetFile(const std::string& path) : in_(path, std::ios::binary) {
  if (!in_) throw FormatError("cannot open '" + path + "'");
  std::uint64_t count = 0;
  read_header(in_, index_, count, hash_);
  count_ = static_cast<std::size_t>(count);
  first_ = in_.tellg();
  in_.seekg(0, std::ios::end);
  if (in_.tellg() - first_ != static_cast<std::streamoff>(count_) * kRecordBytes) {
    throw FormatError("dataset file '" + path + "' is truncated or has trailing bytes");
  }
}

void DatasetFile::read(std::size_t i, DistillRecord& out) const {
  if (i >= count_) throw FormatError("dataset record index out of range");
  in_.clear();
  in_.seekg(first_ + static_cast<std::streamoff>(i) * kRecordBytes);
  read_record(in_, out);
  if (out.morphology_id >= index_.size()) throw FormatError("record refers to an unknown morphology");
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("training steps must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (log_every < 1) throw ConfigError("log stride must be at least 1");
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

TrainResult train_student(const RecordSource& data, const ControllerSpec& init, const TrainConfig& config) {
  config.validate();
  validate(init);
  if (data.size() == 0) throw EmptyDataset("no records to train on");
  const auto& grids = data.morphologies();
  const bool modular = init.arch == Arch::ModularFC;

  // Modular students see one (record, valid slot) pair per sample; the
  // prefix sums let those pairs be drawn uniformly without listing them.
  std::vector<std::uint64_t> prefix;
  std::vector<std::vector<int>> valid_slots(grids.size());
  for (std::size_t g = 0; g < grids.size(); ++g) {
    for (int s = 0; s < kSlots; ++s) {
      if (grids[g].occupied(s)) valid_slots[g].push_back(s);
    }
  }
  std::uint64_t population = data.size();
  if (modular) {
    prefix.reserve(data.size() + 1);
    prefix.push_back(0);
    DistillRecord r;
    for (std::size_t i = 0; i < data.size(); ++i) {
      data.read(i, r);
      prefix.push_back(prefix.back() + valid_slots.at(r.morphology_id).size());
    }
    population = prefix.back();
    if (population == 0) throw EmptyDataset("no valid slots to train on");
  }

  TrainResult result;
  result.student = init;
  std::vector<double>& params = result.student.params;
  Adam adam(params.size(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
  std::vector<double> grad(params.size());
  Rng rng(derive_seed(config.seed, kBatchStream));
  std::uniform_int_distribution<std::uint64_t> pick(0, population - 1);

  DistillRecord record;
  double window = 0.0;
  int window_steps = 0;
  for (int step = 1; step <= config.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double sse = 0.0;
    std::size_t count = 0;
    for (int b = 0; b < config.batch_size; ++b) {
      const std::uint64_t u = pick(rng);
      if (modular) {
        const auto it = std::upper_bound(prefix.begin(), prefix.end(), u);
        const auto i = static_cast<std::size_t>(it - prefix.begin() - 1);
        data.read(i, record);
        const int slot = valid_slots[record.morphology_id][static_cast<std::size_t>(u - prefix[i])];
        const ObservationFrame obs = expand(record, grids[record.morphology_id]);
        sse += accumulate_gradient_local(result.student, local_observation(obs, slot),
                                         record.action.values[static_cast<std::size_t>(slot)], grad);
        ++count;
      } else {
        data.read(static_cast<std::size_t>(u), record);
        const ObservationFrame obs = expand(record, grids[record.morphology_id]);
        sse += accumulate_gradient(result.student, obs, record.action, grad);
        count += valid_slots[record.morphology_id].size();
      }
    }
    if (count == 0) continue;
    const double loss = sse / static_cast<double>(count);
    if (!std::isfinite(loss)) {
      throw NonFiniteLoss("loss became non-finite at step " + std::to_string(step) + " (lr " +
                          std::to_string(config.learning_rate) + ", batch " + std::to_string(config.batch_size) +
                          ")");
    }
    const double scale = 1.0 / static_cast<double>(count);
    for (double& g : grad) g *= scale;
    adam.step(params, grad);

    window += loss;
    ++window_steps;
    if (step % config.log_every == 0 || step == config.steps) {
      result.loss_curve.push_back(window / window_steps);
      result.loss_steps.push_back(step);
      window = 0.0;
      window_steps = 0;
    }
  }
  return result;
}

TrainResult train_student(const RecordSource& data, Arch arch, const Hyper& hyper, const TrainConfig& config) {
  Rng rng(derive_seed(config.seed, kInitStream));
  return train_student(data, random_controller(arch, hyper, rng), config);
}

}  // namespace voxdistill
