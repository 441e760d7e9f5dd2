#pragma once

namespace jnirm::cli {

enum ExitCode { ok = 0, usage = 1, data_error = 2, numerical_failure = 3 };

/// Parses arguments, dispatches to the subcommand and maps errors to exit codes.
int run(int argc, char** argv);

}  // namespace jnirm::cli
