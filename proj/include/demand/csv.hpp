#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace demand::csv {

/// Splits one line on commas. No quoting: identifiers in this project never
/// contain commas.
std::vector<std::string> split(std::string_view line);

/// Reads the next line that is neither empty nor a `#` comment.
bool next_record(std::istream& in, std::string& line);

/// Parses a double; throws DomainError naming `context` on failure.
double parse_double(const std::string& s, std::string_view context);
long long parse_int(const std::string& s, std::string_view context);

/// Shortest round-trip representation.
std::string format(double v);

}  // namespace demand::csv
