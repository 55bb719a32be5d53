#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ldct/error.hpp"

namespace ldct::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitConfig = 4;
inline constexpr int kExitFormat = 5;
inline constexpr int kExitData = 6;
inline constexpr int kExitNumerical = 7;

int exit_code(ErrorKind kind) noexcept;

/// Runs one subcommand. `args` excludes the program name. Failures print a
/// single "error: code=<n> kind=<kind> message=<text>" line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ldct::cli
