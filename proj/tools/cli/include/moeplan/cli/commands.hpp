#pragma once

#include <ostream>

namespace moeplan::cli {

// Exit codes of the moeplan tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitInfeasible = 2;

// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "MOEPLAN_CONFIG";

// Entry point of the moeplan tool: subcommands plan, sweep, simulate,
// calibrate and balance. Never throws; errors are written to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace moeplan::cli
