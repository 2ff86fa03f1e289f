#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aipat::tools {

/// Runs one `aipat` command line (args exclude the program name).
/// Exit codes: 0 success, 1 the command ran into errors (reported on `err`
/// as JSON), 2 usage error.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aipat::tools
