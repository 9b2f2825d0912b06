#pragma once
// Subcommand dispatcher behind the todlab binary. Kept in the library so
// tests can drive full pipelines through the same entry point.

namespace tod::cli {

int run_command(int argc, const char* const* argv);

}  // namespace tod::cli
