#pragma once

#include <iosfwd>
#include <string>

namespace tractgrid {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitParse = 2;
inline constexpr int kExitCapacity = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitShape = 5;

/// Entry point of the `tractgrid` tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Git blob id: SHA-1 of "blob <size>\0" followed by the bytes.
std::string git_blob_sha1(const std::string& bytes);

} // namespace tractgrid
