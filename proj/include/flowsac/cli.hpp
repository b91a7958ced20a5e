#pragma once

#include <string>
#include <vector>

namespace flowsac {

// Command-line front end; args exclude the program name.  Returns the
// process exit code: 0 on success, 1 for usage/config/io problems, 2 for
// numerical failures.  All file outputs are deterministic functions of the
// config and seed.
int run_cli(const std::vector<std::string>& args);

}  // namespace flowsac
