#ifndef FEDSIM_CLI_HPP_
#define FEDSIM_CLI_HPP_

#include <string>
#include <vector>

namespace fedsim {

// Subcommands: run, summarize, gradcheck, selftest.
// Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.
int cli_main(const std::vector<std::string>& args);

}  // namespace fedsim

#endif  // FEDSIM_CLI_HPP_
