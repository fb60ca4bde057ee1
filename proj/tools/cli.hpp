#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sparseemg::cli {

/// Entry point shared by the executable and the tests. Returns the process
/// exit code: 0 on success, 1 on runtime failures, 2 on invalid input.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sparseemg::cli
