#pragma once

#include <iosfwd>

#include "voxdistill/common.hpp"

namespace voxdistill {

// Process exit codes. Empty archives and datasets are data errors with
// their own codes so scripts can tell them apart.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;
inline constexpr int kExitEmptyArchive = 5;
inline constexpr int kExitEmptyDataset = 6;

int exit_code(const Error& e);

/// Entry point of the `voxdistill` tool. Errors are reported as one JSON
/// object on `err`; the return value is the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace voxdistill
