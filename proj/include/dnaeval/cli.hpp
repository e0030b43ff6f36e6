#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dnaeval {

/// Exit codes: 0 success, 1 runtime or configuration error, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line given without the program name, e.g. {"import", "faireval", "in", "out"}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dnaeval
