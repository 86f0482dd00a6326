#pragma once

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

namespace leitsatz::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitService = 4;

/// Exit status for an error escaping a subcommand.
int exit_code_for(const std::exception& error);

/// Parses `args` (without the program name) and runs one subcommand.
/// Messages go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Library version string.
std::string version();

}  // namespace leitsatz::cli
