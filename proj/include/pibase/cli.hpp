#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pibase::cli {

inline constexpr int kOk = 0;
inline constexpr int kMissingArtifact = 2;
inline constexpr int kConnectivity = 3;
inline constexpr int kUsage = 64;
inline constexpr int kDataError = 65;

/// Entry point of the `pibase` tool; `args` excludes the program name. Machine-readable output goes to `out`
/// as JSON lines, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pibase::cli
