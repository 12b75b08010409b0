#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rmot {

/// Exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,  // verify: some applicable bound failed
  kExitUsage = 2,        // bad flags, invalid problem or config, I/O
  kExitRuntime = 3,      // numerical breakdown or reference failure
};

/// Runs one of solve / compare / verify / plot-data. `args` excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace rmot
