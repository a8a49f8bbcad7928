#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace reptrain {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `reptrain` tool. args excludes the program name.
// Subcommands: synth, train, eval, highlight, inspect.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace reptrain
