#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stepattn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `stepattn` tool. `args` excludes the program name.
/// Subcommands: synth, stats, convert, train, eval, crossval, baseline, export-attention.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stepattn
