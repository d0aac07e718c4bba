#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace segsr::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kIoError = 2, kNumericalError = 3 };

// Runs one command line; argv[0] is the program name. Normal output goes to
// `out`, diagnostics ("error: <category>: ...") to `err`.
int run(std::span<const std::string> argv, std::ostream& out, std::ostream& err);

}  // namespace segsr::cli
