#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace glsgn::cli {

enum Exit : int { kOk = 0, kFailure = 1, kUsage = 2 };

// Parses and runs one command line; argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// GLSGN_THREADS, 0 when unset. Raises Error(Config) on garbage.
int thread_budget();

} // namespace glsgn::cli
