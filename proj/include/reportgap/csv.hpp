#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "reportgap/error.hpp"

namespace reportgap::csv {

/// A delimited text file held as strings. Row numbers are 1-based file lines
/// (the header is line 1).
struct Table {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    }

    [[nodiscard]] std::size_t require(std::string_view name) const {
        if (auto idx = find(name)) return *idx;
        throw DataError(fmt::format("{}: missing mapped column '{}'", source, name));
    }
};

inline std::vector<std::string> split_line(std::string_view line, char delim = ',') {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.push_back(std::move(field));
    return out;
}

inline Table parse(std::istream& in, std::string source) {
    Table t;
    t.source = std::move(source);
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!have_header) {
            if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
                line.erase(0, 3);
            if (line.empty()) continue;
            t.header = split_line(line);
            have_header = true;
            continue;
        }
        if (line.empty()) continue;
        t.rows.push_back(split_line(line));
        t.line_numbers.push_back(lineno);
    }
    if (!have_header) throw DataError(fmt::format("{}: missing header row", t.source));
    return t;
}

inline Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open '{}': file missing or unreadable", path.string()));
    return parse(in, path.string());
}

inline std::optional<long long> to_int(std::string_view s) {
    long long v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) return std::nullopt;
    return v;
}

/// Empty, "NA" and "." parse as NaN (missing); anything else must be numeric.
inline std::optional<double> to_double(std::string_view s) {
    if (s.empty() || s == "NA" || s == ".") return std::nan("");
    double v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) return std::nullopt;
    return v;
}

/// Shortest representation that round-trips exactly; NaN prints as NA.
inline std::string fmt_exact(double v) {
    if (std::isnan(v)) return "NA";
    if (v == 0.0) return "0";
    return fmt::format("{}", v);
}

/// Fixed-precision representation; NaN prints as NA.
inline std::string fmt_fixed(double v, int digits) {
    if (std::isnan(v)) return "NA";
    std::string s = fmt::format("{:.{}f}", v, digits);
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

/// Row-oriented writer with a fixed header.
class Writer {
public:
    explicit Writer(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<std::string> row) {
        if (row.size() != header_.size())
            throw std::logic_error(fmt::format("csv row has {} fields, header has {}", row.size(), header_.size()));
        rows_.push_back(std::move(row));
    }

    [[nodiscard]] std::string str() const {
        std::ostringstream out;
        write_line(out, header_);
        for (const auto& r : rows_) write_line(out, r);
        return out.str();
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
        out << str();
    }

    [[nodiscard]] std::size_t size() const { return rows_.size(); }
    [[nodiscard]] const std::vector<std::string>& header() const { return header_; }

private:
    static void write_line(std::ostream& out, const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out << ',';
            const auto& f = fields[i];
            if (f.find_first_of(",\"\n") != std::string::npos) {
                out << '"';
                for (char c : f) {
                    if (c == '"') out << '"';
                    out << c;
                }
                out << '"';
            } else {
                out << f;
            }
        }
        out << '\n';
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

} // namespace reportgap::csv
