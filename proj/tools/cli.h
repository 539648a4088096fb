#ifndef FMCB_TOOLS_CLI_H_
#define FMCB_TOOLS_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace fmcb::tools {

// Runs one fmcb command line (args excludes the program name). Returns the
// process exit code: 0 success, 1 runtime failure, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fmcb::tools

#endif  // FMCB_TOOLS_CLI_H_
