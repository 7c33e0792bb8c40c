#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hrnet::cli {

enum ExitCode : int {
  kOk = 0,
  kVerificationFailed = 1,
  kUsageError = 2,
};

/// Runs one `hrnet` invocation; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hrnet::cli
