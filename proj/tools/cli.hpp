#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace objbias::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitConfig = 2;

/// Runs one subcommand. `args` excludes the program name.
/// Exit status: 0 success, 1 validation failure, 2 configuration error or
/// missing upstream artifact.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace objbias::cli
