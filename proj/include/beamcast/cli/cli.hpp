#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace beamcast::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;     // validation, format and user errors
inline constexpr int kExitNumerical = 3; // non-finite loss or gradient

/// Runs one command line (without the program name), e.g.
/// {"gen-data", "--out", "d", "--samples", "100"}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace beamcast::cli
