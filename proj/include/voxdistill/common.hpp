#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace voxdistill {

inline constexpr int kGridH = 5;
inline constexpr int kGridW = 5;
inline constexpr int kSlots = kGridH * kGridW;
inline constexpr int kNumMaterials = 5;
// volume, speed x, speed y, one-hot material
inline constexpr int kSlotFeatures = 3 + kNumMaterials;
inline constexpr int kGlobalObsDims = kSlots * kSlotFeatures + 1;

inline constexpr double kActionMin = 0.6;
inline constexpr double kActionMax = 1.6;

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream index (splitmix64 finalizer). Every
/// derived stream in the pipeline goes through this so that runs are
/// reproducible without any shared generator.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind { Config = 2, Data = 3, Numerical = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string name, const std::string& what)
      : std::runtime_error(what), kind_(kind), name_(std::move(name)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }

 private:
  ErrorKind kind_;
  std::string name_;
};

#define VOXDISTILL_ERROR(Type, Kind)                                  \
  class Type : public Error {                                         \
   public:                                                            \
    explicit Type(const std::string& what) : Error(Kind, #Type, what) {} \
  }

VOXDISTILL_ERROR(ConfigError, ErrorKind::Config);
VOXDISTILL_ERROR(DisconnectedMorphology, ErrorKind::Data);
VOXDISTILL_ERROR(EmptyMorphology, ErrorKind::Data);
VOXDISTILL_ERROR(NumericalBlowup, ErrorKind::Numerical);
VOXDISTILL_ERROR(ArchMismatch, ErrorKind::Data);
VOXDISTILL_ERROR(EmptyArchive, ErrorKind::Data);
VOXDISTILL_ERROR(EmptyDataset, ErrorKind::Data);
VOXDISTILL_ERROR(NonFiniteLoss, ErrorKind::Numerical);
VOXDISTILL_ERROR(DegenerateSample, ErrorKind::Data);
VOXDISTILL_ERROR(FormatError, ErrorKind::Data);

#undef VOXDISTILL_ERROR

}  // namespace voxdistill
