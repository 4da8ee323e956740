#pragma once

#include "deepcat/corpus.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace deepcat::cli {

/// Runs one command line (args excludes the program name). Returns the
/// process exit code; errors go to `err` as a single line
/// "error: <command>: <message>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Small corpus for quick end-to-end checks (gen-data --smoke).
GeneratorConfig smoke_generator_config();

}  // namespace deepcat::cli
