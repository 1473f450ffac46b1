#ifndef LANGTIME_CLI_COMMANDS_HPP_
#define LANGTIME_CLI_COMMANDS_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace langtime::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// args excludes the program name:
//   <command> [--config path] [--set section.key=value]... [--seed N]
// Failures print one "error: ..." line to `err`.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace langtime::cli

#endif  // LANGTIME_CLI_COMMANDS_HPP_
