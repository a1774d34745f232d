#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "voxdistill/common.hpp"
#include "voxdistill/physics.hpp"

namespace voxdistill {

enum class Arch : std::uint8_t { GlobalFC = 0, GlobalTx = 1, ModularFC = 2 };

std::string_view arch_name(Arch arch);
/// Accepts global_fc / global_tx / modular_fc. Throws ConfigError.
Arch parse_arch(std::string_view name);

struct Hyper {
  int hidden = 64;     // GlobalFC / ModularFC hidden width
  int layers = 2;      // GlobalTx encoder layers
  int model_dim = 32;  // GlobalTx token width
  int heads = 2;
  int ff_dim = 64;

  friend bool operator==(const Hyper&, const Hyper&) = default;
};

struct ControllerSpec {
  Arch arch = Arch::GlobalFC;
  Hyper hyper;
  std::vector<double> params;

  friend bool operator==(const ControllerSpec&, const ControllerSpec&) = default;
};

inline constexpr int kNeighborhood = 3;
inline constexpr int kLocalObsDims = kNeighborhood * kNeighborhood * kSlotFeatures + 1;
inline constexpr double kParamMutationStd = 0.1;

using LocalObservation = std::array<double, kLocalObsDims>;

std::size_t param_count(Arch arch, const Hyper& hyper);

/// Fan-in scaled Gaussian weights, zero biases, unit layer-norm gains.
ControllerSpec random_controller(Arch arch, const Hyper& hyper, Rng& rng);
ControllerSpec zero_controller(Arch arch, const Hyper& hyper);

/// Throws ArchMismatch if the parameter vector has the wrong length or the
/// hyperparameters are inconsistent (e.g. heads not dividing model_dim).
void validate(const ControllerSpec& spec);
void validate_hyper(Arch arch, const Hyper& hyper);

/// Actions for every valid slot in [0.6, 1.6]; invalid slots are exactly 0.
ActionVector forward(const ControllerSpec& spec, const ObservationFrame& obs);

ControllerSpec mutate_params(const ControllerSpec& spec, Rng& rng, double std = kParamMutationStd);

/// One 3x3-neighbourhood input per valid slot, in slot order. Neighbours
/// outside the grid or empty contribute zero blocks; time signal last.
std::vector<std::pair<int, LocalObservation>> to_local_observations(const ObservationFrame& obs);
LocalObservation local_observation(const ObservationFrame& obs, int slot);

/// Single-slot ModularFC evaluation on a pre-assembled local input.
double modular_forward_local(const ControllerSpec& spec, const LocalObservation& local);

/// Adds d(sum of squared action errors over valid slots)/d(params) into
/// `grad` and returns that sum. `grad` must have param_count entries.
double accumulate_gradient(const ControllerSpec& spec, const ObservationFrame& obs, const ActionVector& target,
                           std::span<double> grad);

/// ModularFC single-slot variant of accumulate_gradient.
double accumulate_gradient_local(const ControllerSpec& spec, const LocalObservation& local, double target,
                                 std::span<double> grad);

/// Squared-error sum over valid slots (no gradient).
double squared_error(const ControllerSpec& spec, const ObservationFrame& obs, const ActionVector& target);

/// Binary checkpoint: magic, version, arch, hyper, count, config hash, then
/// little-endian float64 parameters.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ControllerSpec& spec, std::uint64_t config_hash);
ControllerSpec read_checkpoint(std::istream& in, std::uint64_t* config_hash = nullptr);
void save_checkpoint(const std::string& path, const ControllerSpec& spec, std::uint64_t config_hash);
ControllerSpec load_checkpoint(const std::string& path, std::uint64_t* config_hash = nullptr);

}  // namespace voxdistill
