#pragma once

#include <string>
#include <vector>

namespace qsteady::cli {

// Dispatches one subcommand. Returns 0 on success, 1 on validation or
// runtime failure (a JSON error record goes to stderr), 2 on usage errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace qsteady::cli
