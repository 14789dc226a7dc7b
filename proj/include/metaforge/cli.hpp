#pragma once

namespace metaforge {

// Full command-line entry point: parses argv, dispatches to one analysis
// subcommand, prints the report to standard output, and maps failures to the
// exit-code contract (0 success, 1 user error, 2 numerical failure).
int run_cli(int argc, char** argv);

}  // namespace metaforge
