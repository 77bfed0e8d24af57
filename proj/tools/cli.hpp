#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace flowtrace {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int transport = 2;
inline constexpr int topology = 3;
inline constexpr int malformed = 4;
inline constexpr int destination_mismatch = 5;
}  // namespace exit_code

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowtrace
