#pragma once

#include <string>
#include <vector>

namespace mvd {

/// Entry point behind the mvd_lab binary. Exit codes: 0 success, 2 config or
/// usage error, 1 runtime failure.
int cli_main(const std::vector<std::string>& args);
int cli_main(int argc, char** argv);

}  // namespace mvd
