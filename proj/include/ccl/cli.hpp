#pragma once

#include <string>
#include <vector>

namespace ccl::cli {

// Entry point behind the `ccl` binary; also callable in-process by tests.
// Exit codes: 0 success, 1 validation error, 2 runtime failure.
int run(const std::vector<std::string>& args);

}  // namespace ccl::cli
