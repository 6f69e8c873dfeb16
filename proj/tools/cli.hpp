/**
 * @file cli.hpp
 * @brief Entry point of the falce command-line tool, callable in-process
 */
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace falce::cli {

/// Runs one command line (without the program name). Results go to `out`,
/// diagnostics to `err`. Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace falce::cli
