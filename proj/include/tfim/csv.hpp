#pragma once

#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace tfim {

// Every CSV written by the tool carries this value in a schema_version column.
inline constexpr int kCsvSchemaVersion = 1;

// Shortest round-trip decimal form, locale independent; "nan"/"inf" for
// non-finite values.
std::string format_number(double x);
std::string format_number(long long x);

// Comma-separated table with a header row. Cells containing commas, quotes or
// newlines are quoted.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns);

    CsvTable& row(std::vector<std::string> cells);
    std::size_t size() const noexcept { return rows_.size(); }
    std::string str() const;

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

// Minimal reader for files written by CsvTable (handles quoted cells).
struct CsvData {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    // Throws InvalidArgument for an unknown column.
    std::size_t column(std::string_view name) const;
};

CsvData parse_csv(std::string_view text);
double parse_number(std::string_view text);

} // namespace tfim
