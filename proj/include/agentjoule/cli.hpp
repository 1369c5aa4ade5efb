#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace agentjoule::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitAnalysis = 3;
inline constexpr int kExitIncomplete = 4;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace agentjoule::cli
