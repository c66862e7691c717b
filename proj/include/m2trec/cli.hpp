#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace m2trec {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Runs one subcommand (prepare, train, eval, recommend, gradcheck). args
// excludes the program name. Results go to out, JSON-lines logs to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace m2trec
