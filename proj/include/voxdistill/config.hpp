#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "voxdistill/distillation.hpp"
#include "voxdistill/episode.hpp"
#include "voxdistill/evolution.hpp"

namespace voxdistill {

/// Everything that influences results. Serialises to flat `key = value`
/// lines; the hash covers every key except the worker count and
/// qd.generations (shorter runs are prefixes of longer ones).
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 0;

  EvalSettings eval;
  int generalization_reps = 10;

  // teachers, QD occupants and joint baselines
  Arch arch = Arch::GlobalFC;
  Hyper hyper;
  // distilled students
  Arch student_arch = Arch::GlobalFC;
  Hyper student_hyper;

  AfpoConfig afpo;
  MapElitesConfig qd;
  TrainConfig train;
  int episodes_per_teacher = 100;

  /// "desk" (default) or "paper". Throws ConfigError for anything else.
  static RunConfig defaults(std::string_view profile);

  /// Throws ConfigError on unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  std::vector<std::string> keys() const;

  std::string serialize() const;
  std::uint64_t hash() const;
  void validate() const;
};

/// Reads `key = value` lines ('#' starts a comment). A `profile` line, if
/// present, must come first and selects the defaults the rest override.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& config);

}  // namespace voxdistill
