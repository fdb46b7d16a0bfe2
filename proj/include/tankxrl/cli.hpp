#pragma once

#include <iosfwd>

namespace tankxrl::cli {

/// Exit codes: 0 ok, 1 internal, 2 usage, 3 invalid request or config,
/// 4 I/O, 5 LLM endpoint, 6 out of scope or generation failure,
/// 7 numerical failure, 8 fixture mismatch.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int exit_code(const char* error_code);

}  // namespace tankxrl::cli
