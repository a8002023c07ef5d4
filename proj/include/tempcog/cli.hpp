#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tempcog::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;

// Runs one command line (args[0] is the program name). Usage errors return
// 2, data and module errors return 1 with the error text on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tempcog::cli
