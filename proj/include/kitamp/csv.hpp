#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "kitamp/keyvalue.hpp"

namespace kitamp::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> line_numbers;

    std::size_t column(const std::string& name, const std::string& source) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw InputError(source + ": missing column '" + name + "'");
    }
};

/// Reads a numeric CSV with a header row. Every data row must have exactly as many
/// fields as the header; blank lines are skipped.
inline Table read(std::istream& in, const std::string& source) {
    Table t;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split(line, ',');
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size())
            throw ParseError(source, lineno,
                             "expected " + std::to_string(t.header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            auto v = detail::parse_double(f);
            if (!v) throw ParseError(source, lineno, "not a number: '" + f + "'");
            row.push_back(*v);
        }
        t.rows.push_back(std::move(row));
        t.line_numbers.push_back(lineno);
    }
    if (!have_header) throw ParseError(source, lineno, "empty CSV (no header)");
    return t;
}

inline Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return read(in, path);
}

inline void write_row(std::ostream& out, const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ',';
        out << fmt_double(values[i]);
    }
    out << '\n';
}

inline void write_header(std::ostream& out, const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out << ',';
        out << names[i];
    }
    out << '\n';
}

} // namespace kitamp::csv
