#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rox::cli {

/// Runs roxctl with `args` (argv without the program name). Returns the
/// process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rox::cli
