#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cookielife/config.hpp"

namespace cookielife {

// Exit codes: 0 success, 1 usage or configuration error, 2 data or schema
// error (including unwritable output), 3 numerical non-convergence.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env = process_env);
int run(int argc, char** argv);

}  // namespace cookielife
