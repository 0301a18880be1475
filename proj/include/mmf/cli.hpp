#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mmf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // I/O and malformed data
inline constexpr int kExitUsage = 2;    // bad flags or config
inline constexpr int kExitNumeric = 3;  // divergence, failed gradient check

/// Runs one subcommand (generate, train, eval, compare, gradcheck) and
/// returns the process exit code. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

/// Stable hex digest of the sample ids in a split, in order.
std::string split_fingerprint(const std::vector<std::string>& ids);

}  // namespace mmf::cli
