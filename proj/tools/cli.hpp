#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace longimpute::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitAllFailed = 3;

// Entry point shared by main() and the integration tests. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace longimpute::cli
