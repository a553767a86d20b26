#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bbox::cli {

enum ExitCode : int { kOk = 0, kDataError = 1, kUsageError = 2 };

// Runs one command line (args exclude the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace bbox::cli
