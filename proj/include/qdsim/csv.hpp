#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace qdsim::csv {

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

// Empty field for an undefined value.
std::string format_optional(const std::optional<double>& value);

double parse_double(std::string_view text);

std::vector<std::string_view> split_row(std::string_view line);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace qdsim::csv
