#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace skar::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kSelfTestFailure = 3 };

// Runs one command; args excludes the program name. Normal output goes to
// out, diagnostics to err.
int run(const std::vector<std::string>& args, std::FILE* out = stdout, std::FILE* err = stderr);

// Directory used when a command gets no --out: $SKAR_OUTPUT_ROOT/<command>,
// or skar_out/<command> when the variable is unset.
std::string default_output_dir(const std::string& command);

}  // namespace skar::cli
