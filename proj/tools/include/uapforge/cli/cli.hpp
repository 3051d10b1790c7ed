#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace uapforge::cli {

/// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,
    kConfigError = 2,
    kDataError = 3,
    kNumericFailure = 4,
};

/// Runs one invocation. `args` excludes the program name. Summary lines go to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uapforge::cli
