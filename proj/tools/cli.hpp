#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gs4d::cli {

/// Runs one command line (arguments after the program name) and returns the
/// process exit code. Every input is loaded and checked before anything is
/// written, so a failing command leaves no output behind.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace gs4d::cli
