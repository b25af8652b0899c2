#pragma once

#include <string>
#include <vector>

namespace dehaze::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `dehazekit` subcommand (train, eval, dehaze, synth, ablate).
/// Returns 0 when the command's primary artifact was fully written, 2 for
/// usage, configuration and missing-input errors, 1 for runtime failures.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

} // namespace dehaze::cli
