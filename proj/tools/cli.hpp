#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace grdsr::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericalError = 4;

// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "GRDSR_CONFIG";

// Runs one CLI invocation; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace grdsr::cli
