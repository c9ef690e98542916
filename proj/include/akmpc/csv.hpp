#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace akmpc::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by exact header name.
    std::optional<std::size_t> column(std::string_view name) const;
};

/// Comma-separated, optional double-quoted fields, first line is the header.
Table read(const std::filesystem::path& path);
Table parse(std::istream& in);

void write(const std::filesystem::path& path, const Table& table);
void write(std::ostream& out, const Table& table);

/// Shortest decimal form that round-trips to the same double.
std::string format_number(double value);

/// Parse a number; empty, "NaN", "NA" and "null" cells are missing.
std::optional<double> parse_number(std::string_view cell);

}  // namespace akmpc::csv
