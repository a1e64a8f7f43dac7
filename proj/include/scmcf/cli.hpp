#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "scmcf/error.hpp"

namespace scmcf::cli {

/// 0 success, 1 usage or input error, 2 semantic failure of the query
/// (counterlegal antecedent, zero-probability evidence), 3 unsupported backend.
int exit_code(ErrorKind kind);

/// Runs one invocation; `args` excludes the program name. Standard output
/// receives the rendered result only when the whole command succeeds.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scmcf::cli
