#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bikeflow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

inline constexpr const char* kToolVersion = "1.0.0";

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns the process exit code; messages go to `out` and `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bikeflow::cli
