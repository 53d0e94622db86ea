#pragma once

#include <iosfwd>

namespace nl2flow {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUserError = 1, kExitPipelineError = 2 };

/// Entry point of the `nl2flow` tool with injectable streams. Subcommands:
/// generate, eval, classify, catalog-validate, export.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in);

}  // namespace nl2flow
