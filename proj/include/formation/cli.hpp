#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace formation::cli {

/// Runs one command line (args[0] is the program name). Module errors are
/// printed to `err` as ApiError JSON and return exit code 1; `validate`
/// returns 0 clean, 1 with diagnostics, 2 when files cannot be read.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace formation::cli
