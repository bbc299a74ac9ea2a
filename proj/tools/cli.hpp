#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fiem::cli {

enum ExitCode : int { kSuccess = 0, kFailure = 1, kInfeasible = 2, kDomainAbort = 3 };

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fiem::cli
