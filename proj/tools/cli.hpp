#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dor::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Parses and runs one subcommand. `args` excludes the program name. Data goes to `out`, diagnostics and
// --verbose summaries to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dor::cli
