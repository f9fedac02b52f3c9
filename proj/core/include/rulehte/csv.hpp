#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rulehte::csv {

/// A parsed CSV table: a header row plus string cells. Quoted fields with
/// embedded separators and doubled quotes are supported.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column, or -1.
    int column(const std::string& name) const;
};

Table read(std::istream& in, char sep = ',');
Table read_file(const std::string& path, char sep = ',');

/// Quote a field if it contains the separator, a quote or a newline.
std::string escape(const std::string& field, char sep = ',');

/// Shortest round-trip decimal representation of a double; "NA" for NaN,
/// "Inf"/"-Inf" for infinities.
std::string format_double(double v);

/// Writes one CSV line (with trailing newline).
void write_row(std::ostream& out, const std::vector<std::string>& fields, char sep = ',');

}  // namespace rulehte::csv
