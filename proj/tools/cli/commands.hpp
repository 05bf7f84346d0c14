#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace graphrefine::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

/// Parses `args` (without the program name) and runs the chosen
/// subcommand. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace graphrefine::cli
