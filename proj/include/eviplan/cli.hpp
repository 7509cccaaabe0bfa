#pragma once

namespace eviplan::cli {

/// Parses arguments and executes one subcommand (run, compare, ablate,
/// uncertainty, fit-demo, validate-config). Returns the process exit code:
/// 0 on success (diverged runs are reported, not fatal), 1 on configuration
/// or usage errors, 2 on runtime or I/O failures.
int run_cli(int argc, const char* const* argv);

}  // namespace eviplan::cli
