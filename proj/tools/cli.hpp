#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mcq::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kRuntimeError = 1,
  kQuantizationError = 2,
  kUsage = 64,
};

/// Runs the `mcq` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Thread budget from MCQ_THREADS, falling back to the hardware count.
unsigned thread_budget();

/// "0.1:2.0:0.1" (inclusive range) or "0.25,0.5,1".
std::vector<double> parse_k_grid(const std::string& text);
/// "0:9" (inclusive range) or "1,2,3".
std::vector<unsigned long long> parse_seed_list(const std::string& text);

} // namespace mcq::cli
