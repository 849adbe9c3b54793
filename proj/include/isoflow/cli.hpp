#pragma once

#include <iosfwd>

#include "isoflow/common.hpp"

namespace isoflow::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_usage = 2;
inline constexpr int exit_io = 3;
inline constexpr int exit_divergence = 4;
inline constexpr int exit_shape = 5;

int exit_code(ErrorCode code);

// Runs the command line `argv` (argv[0] is the program name), writing normal
// output to `out` and diagnostics to `err`. Returns the process exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace isoflow::cli
