#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace guiagent {

// Exit codes: 0 all oracles passed, 1 an oracle or the interaction failed,
// 2 engine or configuration error.
constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitError = 2;

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace guiagent
