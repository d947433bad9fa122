#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace genvideo::cli {

enum ExitCode { ok = 0, io_failure = 2, invalid = 3, pipeline_failure = 4 };

/// Runs the command line (args exclude the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace genvideo::cli
