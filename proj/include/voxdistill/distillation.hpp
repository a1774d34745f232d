#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "voxdistill/controllers.hpp"
#include "voxdistill/episode.hpp"
#include "voxdistill/evolution.hpp"

namespace voxdistill {

// Per slot only volume and velocity vary between records; the material
// one-hot and the valid mask follow from the morphology.
inline constexpr int kDynamicFeatures = 3;

struct DistillRecord {
  std::uint32_t morphology_id = 0;
  double time_signal = 0.0;
  std::array<double, kSlots * kDynamicFeatures> dynamic{};
  ActionVector action;  // teacher output before actuator noise
};

/// Random-access view over (observation, action) records.
class RecordSource {
 public:
  virtual ~RecordSource() = default;
  virtual std::size_t size() const = 0;
  virtual const std::vector<MorphologyGrid>& morphologies() const = 0;
  virtual void read(std::size_t i, DistillRecord& out) const = 0;
};

ObservationFrame expand(const DistillRecord& record, const MorphologyGrid& grid);
DistillRecord compress(std::uint32_t morphology_id, const ObservationFrame& obs, const ActionVector& action);

struct DistillDataset final : RecordSource {
  std::vector<MorphologyGrid> index;
  std::vector<DistillRecord> records;
  std::uint64_t failed_episodes = 0;

  std::size_t size() const override { return records.size(); }
  const std::vector<MorphologyGrid>& morphologies() const override { return index; }
  void read(std::size_t i, DistillRecord& out) const override { out = records[i]; }

  std::uint32_t add_morphology(const MorphologyGrid& grid);
  ObservationFrame frame(std::size_t i) const { return expand(records[i], index[records[i].morphology_id]); }
  /// Throws FormatError if a morphology id does not resolve or a valid-slot
  /// action lies outside [0.6, 1.6].
  void check() const;
};

/// Replays each teacher `episodes_per_teacher` times with noise on. Episode
/// seeds are derive_seed(noise.seed, teacher, episode). Blown-up episodes
/// are dropped and counted in failed_episodes.
DistillDataset collect_dataset(const std::vector<Individual>& teachers, int episodes_per_teacher,
                               const NoiseConfig& noise, const WorldConfig& world, int workers = 1);

DistillDataset merge_datasets(const std::vector<const DistillDataset*>& parts);

/// Every way of picking one champion per morphology, first morphology
/// varying slowest: prod(counts) index tuples.
std::vector<std::vector<std::size_t>> champion_combinations(const std::vector<std::size_t>& counts);

/// One merged dataset per champion combination. per_champion[m][r] is the
/// dataset collected from champion r of morphology m.
std::vector<DistillDataset> combo_datasets(const std::vector<std::vector<DistillDataset>>& per_champion);

inline constexpr std::uint32_t kDatasetVersion = 1;

/// Layout: magic, version, slot layout (slots, features, dynamic features),
/// config hash, morphology table, record count, fixed-width records.
void save_dataset(const std::string& path, const DistillDataset& data, std::uint64_t config_hash);
DistillDataset load_dataset(const std::string& path, std::uint64_t* config_hash = nullptr);
void export_csv(std::ostream& out, const DistillDataset& data, std::size_t max_rows = SIZE_MAX);

/// Streams records from a dataset file without loading them.
class DatasetFile final : public RecordSource {
 public:
  explicit DatasetFile(const std::string& path);
  std::size_t size() const override { return count_; }
  const std::vector<MorphologyGrid>& morphologies() const override { return index_; }
  void read(std::size_t i, DistillRecord& out) const override;
  std::uint64_t config_hash() const { return hash_; }

 private:
  mutable std::ifstream in_;
  std::vector<MorphologyGrid> index_;
  std::size_t count_ = 0;
  std::streamoff first_ = 0;
  std::uint64_t hash_ = 0;
};

struct TrainConfig {
  int steps = 100000;
  int batch_size = 128;
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int log_every = 100;  // loss curve stride in steps

  void validate() const;
};

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  int steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

struct TrainResult {
  ControllerSpec student;
  // mean mini-batch loss over each window of log_every steps
  std::vector<double> loss_curve;
  std::vector<int> loss_steps;
};

/// Adam on uniformly sampled mini-batches; loss is the mean squared error
/// over valid-slot actions. ModularFC trains on (record, slot) pairs.
/// Starts from `init`'s parameters. Throws EmptyDataset, NonFiniteLoss.
TrainResult train_student(const RecordSource& data, const ControllerSpec& init, const TrainConfig& config);
TrainResult train_student(const RecordSource& data, Arch arch, const Hyper& hyper, const TrainConfig& config);

}  // namespace voxdistill
