#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace metabias::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Entry point of the command-line tool. Returns 0 on success, 1 for invalid
/// input or usage, 2 when a numerical procedure fails.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace metabias::cli
