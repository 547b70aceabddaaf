// Command-line front end: synth, train, calibrate, decode, eval.
//
// Exit codes: 0 success, 1 usage, 2 I/O or parse, 3 numerical failure.

#ifndef METRA_CLI_H
#define METRA_CLI_H

#include <iosfwd>
#include <string>
#include <vector>

namespace metra {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitNumerical = 3;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

/// Plain-text dot diagram: a level-l boundary is a column of l+1 dots.
std::string dot_diagram(const std::vector<int>& levels, int num_layers);

}  // namespace metra

#endif  // METRA_CLI_H
