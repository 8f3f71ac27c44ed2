#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace phaseseg::cli {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

/// Runs one command. `args` excludes the program name, e.g.
/// {"train", "--ssl-features", "data", "--out", "run"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace phaseseg::cli
