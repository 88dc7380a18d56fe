#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace uhal::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kMetadataError = 3,
};

// Runs one command line (without the program name). Used by the uhal
// binary and by tests that drive commands in-process.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uhal::cli
