#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "voxdistill/common.hpp"

namespace voxdistill {

enum class Material : std::uint8_t {
  Empty = 0,
  Rigid = 1,
  Elastic = 2,
  HorizontalActuator = 3,
  VerticalActuator = 4,
};

constexpr bool is_actuator(Material m) {
  return m == Material::HorizontalActuator || m == Material::VerticalActuator;
}

/// Robot body: a kGridH x kGridW material matrix stored row-major, row 0 on top.
struct MorphologyGrid {
  std::array<Material, kSlots> cells{};

  Material at(int row, int col) const { return cells[static_cast<std::size_t>(row * kGridW + col)]; }
  Material& at(int row, int col) { return cells[static_cast<std::size_t>(row * kGridW + col)]; }

  bool occupied(int slot) const { return cells[static_cast<std::size_t>(slot)] != Material::Empty; }

  friend bool operator==(const MorphologyGrid&, const MorphologyGrid&) = default;
  friend auto operator<=>(const MorphologyGrid&, const MorphologyGrid&) = default;
};

struct MorphologyGridHash {
  std::size_t operator()(const MorphologyGrid& g) const noexcept;
};

struct Descriptor {
  int n_voxels = 0;
  int n_active = 0;

  friend bool operator==(const Descriptor&, const Descriptor&) = default;
  friend auto operator<=>(const Descriptor&, const Descriptor&) = default;
};

bool is_connected(const MorphologyGrid& grid);

Descriptor descriptor(const MorphologyGrid& grid);

int hamming_distance(const MorphologyGrid& a, const MorphologyGrid& b);

struct MutationResult {
  MorphologyGrid grid;
  // True when every retry produced an invalid grid; `grid` is then the parent.
  bool exhausted = false;
};

inline constexpr double kMorphologyMutationRate = 0.1;
inline constexpr int kMorphologyMutationRetries = 100;

/// Resamples each cell uniformly over all materials with probability `rate`,
/// retrying until the child is connected and non-empty.
MutationResult mutate_morphology(const MorphologyGrid& grid, Rng& rng,
                                 double rate = kMorphologyMutationRate);

/// Uniform material per cell, rejected until connected.
MorphologyGrid random_morphology(Rng& rng);

/// One-voxel-at-a-time walk from `a` towards `b` (row-major order of the
/// differing cells). Returns the strict intermediates that are connected and
/// for which `known` is false.
std::vector<MorphologyGrid> interpolate_path(
    const MorphologyGrid& a, const MorphologyGrid& b,
    const std::function<bool(const MorphologyGrid&)>& known);

/// Throws FormatError on malformed input. Accepts 5 lines of 5 digits.
MorphologyGrid parse_grid(std::string_view text);
std::string format_grid(const MorphologyGrid& grid);

/// Hand-transcribed fixture bodies used by the joint-training baseline.
/// Names: biped, worm, triped, block.
MorphologyGrid fixture(std::string_view name);
std::vector<std::string> fixture_names();

}  // namespace voxdistill
