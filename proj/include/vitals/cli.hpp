#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vitals {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs one command line (without the program name). Never throws: usage
// problems return 2, data/config/runtime errors return 1.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vitals
