#pragma once

// Per-architecture kernels behind the dispatch in controllers.cpp.

#include <cmath>
#include <span>
#include <vector>

#include "voxdistill/controllers.hpp"

namespace voxdistill::detail {

// 1.1 + 0.5 tanh(z) maps any pre-activation into [0.6, 1.6].
inline double squash(double z) { return 0.5 * (kActionMin + kActionMax) + 0.5 * std::tanh(z); }

std::size_t global_fc_count(const Hyper& h);
void global_fc_init(const Hyper& h, Rng& rng, std::span<double> p);
ActionVector global_fc_forward(const ControllerSpec& spec, const ObservationFrame& obs);
double global_fc_gradient(const ControllerSpec& spec, const ObservationFrame& obs, const ActionVector& target,
                          std::span<double> grad);

std::size_t modular_fc_count(const Hyper& h);
void modular_fc_init(const Hyper& h, Rng& rng, std::span<double> p);
double modular_fc_slot(const ControllerSpec& spec, const LocalObservation& x);
double modular_fc_slot_gradient(const ControllerSpec& spec, const LocalObservation& x, double target,
                                std::span<double> grad);

std::size_t global_tx_count(const Hyper& h);
void global_tx_init(const Hyper& h, Rng& rng, std::span<double> p);
ActionVector global_tx_forward(const ControllerSpec& spec, const ObservationFrame& obs);
double global_tx_gradient(const ControllerSpec& spec, const ObservationFrame& obs, const ActionVector& target,
                          std::span<double> grad);

}  // namespace voxdistill::detail
