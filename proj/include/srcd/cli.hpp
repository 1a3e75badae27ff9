#pragma once

#include <string>
#include <vector>

namespace srcd::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kConfigError = 2;
inline constexpr int kDatasetError = 3;
inline constexpr int kCheckpointError = 4;
inline constexpr int kUsageError = 64;

/// Entry point for `srcdnet <subcommand> ...`; args excludes the program name.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace srcd::cli
