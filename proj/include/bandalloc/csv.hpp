#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bandalloc::csv {

/// RFC 4180 field quoting: fields containing a comma, quote, CR or LF are
/// wrapped in quotes with embedded quotes doubled.
std::string quote(std::string_view field);

/// Round-trip text for a double ("%.17g").
std::string number(double v);
std::string number(std::uint64_t v);
std::string number(std::int64_t v);
inline std::string number(int v) { return number(static_cast<std::int64_t>(v)); }

/// Quotes each cell as needed, joins with commas and appends "\r\n".
std::string row(const std::vector<std::string>& cells);

/// Splits CSV text into rows of unquoted fields.
std::vector<std::vector<std::string>> parse(std::string_view text);

}  // namespace bandalloc::csv
