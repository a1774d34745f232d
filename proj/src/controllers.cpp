#include "voxdistill/controllers.hpp"

#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "nets.hpp"

namespace voxdistill {

std::string_view arch_name(Arch arch) {
  switch (arch) {
    case Arch::GlobalFC: return "global_fc";
    case Arch::GlobalTx: return "global_tx";
    case Arch::ModularFC: return "modular_fc";
  }
  return "unknown";
}

Arch parse_arch(std::string_view name) {
  if (name == "global_fc") return Arch::GlobalFC;
  if (name == "global_tx") return Arch::GlobalTx;
  if (name == "modular_fc") return Arch::ModularFC;
  throw ConfigError("unknown controller architecture '" + std::string(name) + "'");
}

std::size_t param_count(Arch arch, const Hyper& hyper) {
  switch (arch) {
    case Arch::GlobalFC: return detail::global_fc_count(hyper);
    case Arch::GlobalTx: return detail::global_tx_count(hyper);
    case Arch::ModularFC: return detail::modular_fc_count(hyper);
  }
  throw ArchMismatch("unknown architecture tag");
}

void validate_hyper(Arch arch, const Hyper& h) {
  if (arch == Arch::GlobalTx) {
    if (h.model_dim <= 0 || h.heads <= 0 || h.model_dim % h.heads != 0 || h.layers < 0 || h.ff_dim <= 0) {
      throw ArchMismatch("inconsistent transformer hyperparameters");
    }
  } else if (h.hidden <= 0) {
    throw ArchMismatch("hidden width must be positive");
  }
}

void validate(const ControllerSpec& spec) {
  validate_hyper(spec.arch, spec.hyper);
  const Hyper& h = spec.hyper;
  const std::size_t want = param_count(spec.arch, h);
  if (spec.params.size() != want) {
    throw ArchMismatch(std::string(arch_name(spec.arch)) + " expects " + std::to_string(want) + " parameters, got " +
                       std::to_string(spec.params.size()));
  }
}

ControllerSpec zero_controller(Arch arch, const Hyper& hyper) {
  ControllerSpec spec{arch, hyper, {}};
  spec.params.assign(param_count(arch, hyper), 0.0);
  validate(spec);
  return spec;
}

ControllerSpec random_controller(Arch arch, const Hyper& hyper, Rng& rng) {
  ControllerSpec spec = zero_controller(arch, hyper);
  switch (arch) {
    case Arch::GlobalFC: detail::global_fc_init(hyper, rng, spec.params); break;
    case Arch::GlobalTx: detail::global_tx_init(hyper, rng, spec.params); break;
    case Arch::ModularFC: detail::modular_fc_init(hyper, rng, spec.params); break;
  }
  return spec;
}

LocalObservation local_observation(const ObservationFrame& obs, int slot) {
  LocalObservation local{};
  const int r = slot / kGridW;
  const int c = slot % kGridW;
  int block = 0;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc, ++block) {
      const int nr = r + dr;
      const int nc = c + dc;
      if (nr < 0 || nr >= kGridH || nc < 0 || nc >= kGridW) continue;
      const int n = nr * kGridW + nc;
      if (!obs.valid_mask[static_cast<std::size_t>(n)]) continue;
      const double* f = obs.slot(n);
      std::copy(f, f + kSlotFeatures, local.begin() + block * kSlotFeatures);
    }
  }
  local[kLocalObsDims - 1] = obs.time_signal;
  return local;
}

std::vector<std::pair<int, LocalObservation>> to_local_observations(const ObservationFrame& obs) {
  std::vector<std::pair<int, LocalObservation>> out;
  for (int s = 0; s < kSlots; ++s) {
    if (obs.valid_mask[static_cast<std::size_t>(s)]) out.emplace_back(s, local_observation(obs, s));
  }
  return out;
}

double modular_forward_local(const ControllerSpec& spec, const LocalObservation& local) {
  return detail::modular_fc_slot(spec, local);
}

ActionVector forward(const ControllerSpec& spec, const ObservationFrame& obs) {
  if (spec.params.size() != param_count(spec.arch, spec.hyper)) validate(spec);
  switch (spec.arch) {
    case Arch::GlobalFC: return detail::global_fc_forward(spec, obs);
    case Arch::GlobalTx: return detail::global_tx_forward(spec, obs);
    case Arch::ModularFC: {
      ActionVector out;
      for (const auto& [slot, local] : to_local_observations(obs)) {
        out.values[static_cast<std::size_t>(slot)] = detail::modular_fc_slot(spec, local);
      }
      return out;
    }
  }
  throw ArchMismatch("unknown architecture tag");
}

ControllerSpec mutate_params(const ControllerSpec& spec, Rng& rng, double std) {
  ControllerSpec child = spec;
  if (std <= 0.0) return child;
  std::normal_distribution<double> noise(0.0, std);
  for (double& p : child.params) p += noise(rng);
  return child;
}

double accumulate_gradient(const ControllerSpec& spec, const ObservationFrame& obs, const ActionVector& target,
                           std::span<double> grad) {
  if (grad.size() != spec.params.size()) throw ArchMismatch("gradient buffer size mismatch");
  switch (spec.arch) {
    case Arch::GlobalFC: return detail::global_fc_gradient(spec, obs, target, grad);
    case Arch::GlobalTx: return detail::global_tx_gradient(spec, obs, target, grad);
    case Arch::ModularFC: {
      double sse = 0.0;
      for (const auto& [slot, local] : to_local_observations(obs)) {
        sse += detail::modular_fc_slot_gradient(spec, local, target.values[static_cast<std::size_t>(slot)], grad);
      }
      return sse;
    }
  }
  throw ArchMismatch("unknown architecture tag");
}

double accumulate_gradient_local(const ControllerSpec& spec, const LocalObservation& local, double target,
                                 std::span<double> grad) {
  if (spec.arch != Arch::ModularFC) throw ArchMismatch("local gradients are only defined for modular_fc");
  return detail::modular_fc_slot_gradient(spec, local, target, grad);
}

double squared_error(const ControllerSpec& spec, const ObservationFrame& obs, const ActionVector& target) {
  const ActionVector pred = forward(spec, obs);
  double sse = 0.0;
  for (int s = 0; s < kSlots; ++s) {
    const auto i = static_cast<std::size_t>(s);
    if (!obs.valid_mask[i]) continue;
    const double e = pred.values[i] - target.values[i];
    sse += e * e;
  }
  return sse;
}

namespace {
constexpr char kCheckpointMagic[5] = "VDCK";
}

void write_checkpoint(std::ostream& out, const ControllerSpec& spec, std::uint64_t config_hash) {
  validate(spec);
  io::put_magic(out, kCheckpointMagic);
  io::put_u32(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(spec.arch));
  io::put_u32(out, static_cast<std::uint32_t>(spec.hyper.hidden));
  io::put_u32(out, static_cast<std::uint32_t>(spec.hyper.layers));
  io::put_u32(out, static_cast<std::uint32_t>(spec.hyper.model_dim));
  io::put_u32(out, static_cast<std::uint32_t>(spec.hyper.heads));
  io::put_u32(out, static_cast<std::uint32_t>(spec.hyper.ff_dim));
  io::put_u64(out, spec.params.size());
  io::put_u64(out, config_hash);
  for (double p : spec.params) io::put_f64(out, p);
}

ControllerSpec read_checkpoint(std::istream& in, std::uint64_t* config_hash) {
  io::expect_magic(in, kCheckpointMagic, "controller checkpoint");
  io::expect_version(io::get_u32(in), kCheckpointVersion, "controller checkpoint");
  ControllerSpec spec;
  const std::uint32_t tag = io::get_u32(in);
  if (tag > static_cast<std::uint32_t>(Arch::ModularFC)) throw FormatError("unknown architecture tag in checkpoint");
  spec.arch = static_cast<Arch>(tag);
  spec.hyper.hidden = static_cast<int>(io::get_u32(in));
  spec.hyper.layers = static_cast<int>(io::get_u32(in));
  spec.hyper.model_dim = static_cast<int>(io::get_u32(in));
  spec.hyper.heads = static_cast<int>(io::get_u32(in));
  spec.hyper.ff_dim = static_cast<int>(io::get_u32(in));
  const std::uint64_t count = io::get_u64(in);
  const std::uint64_t hash = io::get_u64(in);
  if (config_hash != nullptr) *config_hash = hash;
  if (count > (1u << 26)) throw FormatError("implausible parameter count in checkpoint");
  spec.params.resize(static_cast<std::size_t>(count));
  for (double& p : spec.params) {
    p = io::get_f64(in);
    if (!std::isfinite(p)) throw FormatError("non-finite parameter in checkpoint");
  }
  validate(spec);
  return spec;
}

void save_checkpoint(const std::string& path, const ControllerSpec& spec, std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  write_checkpoint(out, spec, config_hash);
  if (!out) throw FormatError("failed writing '" + path + "'");
}

ControllerSpec load_checkpoint(const std::string& path, std::uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return read_checkpoint(in, config_hash);
}

}  // namespace voxdistill
