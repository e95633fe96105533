#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rbo::cli {

// Stable exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kIo = 3;
inline constexpr int kDiverged = 4;
inline constexpr int kVerification = 5;

// Runs one `rbo` invocation; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rbo::cli
