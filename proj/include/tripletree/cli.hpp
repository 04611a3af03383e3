#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tripletree {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (args[0] is the program name). Relative output
/// paths are resolved against $TRIPLETREE_OUT_DIR when it is set.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tripletree
