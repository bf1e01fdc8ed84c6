#include "qdsim/csv.hpp"

#include <charconv>
#include <cmath>

#include "qdsim/error.hpp"

namespace qdsim::csv {

std::string format_double(double value) {
    if (value == 0.0) return "0";  // folds -0 so reruns cannot differ by sign of zero
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw Error(ErrorCategory::Io, "failed to format floating-point value");
    return std::string(buf, end);
}

std::string format_optional(const std::optional<double>& value) {
    return value ? format_double(*value) : std::string{};
}

double parse_double(std::string_view text) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error(ErrorCategory::Io, "malformed number in CSV: '" + std::string(text) + "'");
    }
    return v;
}

std::vector<std::string_view> split_row(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << fields[i];
    }
    out << '\n';
}

}  // namespace qdsim::csv
