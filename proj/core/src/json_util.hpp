#pragma once

#include <string>

#include <json.hpp>

namespace qpt::detail {

using Json = nlohmann::json;  // std::map objects, so keys come out sorted

/// Deterministic text: sorted keys, two-space indent, floats as %.{digits}g,
/// non-finite floats as null, LF line endings, trailing newline.
std::string dump_json(const Json& j, int float_digits = 12);

/// Parses and checks that "format_version" has the expected major number.
/// Throws DataError.
Json parse_versioned_json(const std::string& text, const std::string& what);

/// Fixed "%.{digits}g" formatting through std::to_chars.
void append_number(std::string& out, double v, int digits);

}  // namespace qpt::detail
