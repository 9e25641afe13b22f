#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace utged::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Parses and runs one subcommand. Returns 0 on success, 1 on a usage error
// (bad flags, malformed input, unknown config keys) and 2 on any runtime
// failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// Same, with the arguments after the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace utged::cli
