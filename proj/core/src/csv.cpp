#include "rulehte/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "rulehte/error.hpp"

namespace rulehte::csv {

namespace {

std::vector<std::string> split_line(const std::string& line, char sep, std::size_t line_no) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == sep) {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) {
        throw DataError("CSV line " + std::to_string(line_no) + ": unterminated quoted field");
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace

int Table::column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == name) return static_cast<int>(j);
    }
    return -1;
}

Table read(std::istream& in, char sep) {
    Table t;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!have_header) {
            // UTF-8 byte order mark
            if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
                static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
                line.erase(0, 3);
            }
            if (line.empty()) continue;
            t.header = split_line(line, sep, line_no);
            have_header = true;
            continue;
        }
        if (line.empty()) continue;
        auto fields = split_line(line, sep, line_no);
        if (fields.size() != t.header.size()) {
            throw DataError("CSV line " + std::to_string(line_no) + ": expected " +
                            std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw DataError("CSV input is empty (header row required)");
    return t;
}

Table read_file(const std::string& path, char sep) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    return read(in, sep);
}

std::string escape(const std::string& field, char sep) {
    if (field.find_first_of(std::string{sep, '"', '\n', '\r'}) == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_row(std::ostream& out, const std::vector<std::string>& fields, char sep) {
    for (std::size_t j = 0; j < fields.size(); ++j) {
        if (j > 0) out << sep;
        out << escape(fields[j], sep);
    }
    out << '\n';
}

}  // namespace rulehte::csv
