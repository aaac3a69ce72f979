#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace scope3 {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUserError = 1, kExitInternalError = 2 };

/// Runs the `scope3` command line. args[0] is the program name. Output goes
/// to `out`; failures print a single diagnostic line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scope3
