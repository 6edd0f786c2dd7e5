// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace objstyle::cli {

/// Process exit codes (sysexits-style).
enum ExitCode : int {
    kOk = 0,
    kGroundingFailed = 2,
    kBackendLoadFailed = 3,
    kUsage = 64,      // EX_USAGE: bad or missing flags
    kDataError = 65,  // EX_DATAERR: malformed manifest
    kNoInput = 66,    // EX_NOINPUT: unreadable input file
    kSoftware = 70,   // EX_SOFTWARE: training divergence or other failures
    kCantCreate = 73, // EX_CANTCREAT: output directory not writable
    kConfig = 78,     // EX_CONFIG: invalid config file
};

/// Entry point of the `objstyle` tool. Subcommands: stylize, ground,
/// evaluate, grid, defaults. Never writes outside the --output directory.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace objstyle::cli
