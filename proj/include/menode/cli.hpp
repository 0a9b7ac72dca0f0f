#pragma once

#include <exception>
#include <iosfwd>

namespace menode {

// Process exit codes of the menode tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,     // a check the user asked for did not pass
  kExitUsage = 2,       // bad flags, config, missing files, contract violations
  kExitData = 3,        // malformed or inconsistent input data
  kExitNumeric = 4,     // divergence, training or calibration failure
  kExitIntegrity = 5,   // corrupt or unsupported checkpoint
};

int exit_code_for(const std::exception& error);

// Runs the command line; never throws. Diagnostics go to err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace menode
