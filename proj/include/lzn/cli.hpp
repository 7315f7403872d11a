#pragma once

#include <iosfwd>

namespace lzn {

/// Process exit codes of the `lzn` command.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,      // invalid argument value or other runtime error
  kExitUsage = 2,        // unknown flag or subcommand, malformed option
  kExitConfig = 3,       // unreadable or invalid config file
  kExitIo = 4,           // missing or corrupt checkpoint, unwritable output
  kExitNumeric = 5,      // non-finite loss or state during training
  kExitCheckFailed = 6,  // grad-check above tolerance
};

/// Entry point of the `lzn` command; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lzn
