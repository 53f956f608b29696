#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nf::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kIo = 3, kDivergence = 4 };

/// Runs the `nf` command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nf::cli
