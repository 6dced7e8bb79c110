// latctl — typed error hierarchy mapped onto process exit codes by the CLI.
// SPDX-License-Identifier: MIT
#pragma once

#include <stdexcept>
#include <string>

namespace latctl {

// Bad arguments, malformed configs, dimension mismatches.  CLI exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem and format failures (unreadable paths, checksum mismatch).  Exit code 3.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failures (non-finite values, near-singular transitions).  Exit code 4.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

}  // namespace latctl
