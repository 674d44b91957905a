// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dpid {

/// Process exit codes of the dpid tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,    ///< unexpected failure
  kExitUsage = 2,       ///< unknown flag, bad flag value, missing argument
  kExitInput = 3,       ///< unreadable config, fixture, checkpoint or latent
  kExitEstimation = 4,  ///< invalid domain, shape or condition during a run
  kExitTransport = 5,   ///< bridge unreachable or protocol failure
};

std::string version();

/// args[0] is the program name. Results go to `out`, failures to `err` as a
/// one-line JSON record {"error": {"code", "kind", "message"}}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dpid
