#ifndef TAHDG_CLI_HPP
#define TAHDG_CLI_HPP

#include <string>
#include <vector>

namespace tahdg::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace tahdg::cli

#endif
