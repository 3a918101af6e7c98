#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace deparadox::cli {

// Exit codes: 0 success, 1 bad input or usage, 2 internal failure.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deparadox::cli
