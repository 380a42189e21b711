#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dipe {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    exit_ok = 0,
    exit_config = 2,
    exit_data = 3,
    exit_numeric = 4,
};

/// Runs one command. `args` excludes the program name, e.g.
/// {"train", "--data", "ETTh1.csv", "--checkpoint", "model.json"}. Results go
/// to `out`, diagnostics to `err`; the return value is an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dipe
