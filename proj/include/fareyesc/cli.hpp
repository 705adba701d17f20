#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fareyesc {

/// Exit codes of the command-line driver.
enum ExitCode : int {
  kExitOk = 0,
  kExitInvariantFailed = 1,
  kExitUsage = 2,
  kExitNonConvergent = 3,
  kExitError = 4,
};

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "FAREYESC_OUTPUT_DIR";

/// Runs one command line (args[0] is the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a, used for the config hash in output headers.
std::uint64_t fnv1a64(const std::string& data);

}  // namespace fareyesc
