#pragma once

#include <string>
#include <vector>

namespace qv::cli {

// Runs one CLI invocation (args exclude the program name). Exit codes:
// 0 success, 2 validation error, 3 data error, 4 internal numeric error.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace qv::cli
