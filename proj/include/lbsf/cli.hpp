#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lbsf::cli {

// Runs one subcommand (generate | train | eval | score | explain | bench).
// Returns 0 on success, 2 on usage errors, 1 on data or model errors.
// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

} // namespace lbsf::cli
