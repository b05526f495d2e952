#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "json.hpp"

namespace metabias {

/// Decimal text with 17 significant digits ("%.17g"). Non-finite values
/// render as "nan", "inf" or "-inf".
std::string format_number(double x);

/// Pretty-printed JSON (2-space indent) whose floating-point numbers carry 17
/// significant digits. Non-finite doubles are written as null.
void write_json(std::ostream& out, const nlohmann::json& j);
std::string dump_json(const nlohmann::json& j);
void save_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace metabias
