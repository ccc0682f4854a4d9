#pragma once

// Command-line front end: synth, train, explain, baseline, retrain, eval,
// report and rerun. Every command writes its artifacts and a manifest.json
// into the output directory.
//
// Exit codes: 0 success, 1 validation or usage error, 2 numerical failure.

#include <string>
#include <vector>

namespace cgt::cli {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

// Environment variable naming the default output root.
constexpr const char* kOutputRootEnv = "CGT_OUTPUT_ROOT";

// `args` excludes the program name.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, char** argv);

}  // namespace cgt::cli
