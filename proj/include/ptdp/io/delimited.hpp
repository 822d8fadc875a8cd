#pragma once

#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ptdp/core.hpp"
#include "ptdp/io/file.hpp"

namespace ptdp::io {

struct DelimitedTable {
    Matrix<double> values;
    std::vector<std::string> column_names;  // empty without a header row
    std::vector<std::string> row_names;     // empty without a label column
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(delim, start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

inline std::optional<double> parse_number(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::string where(std::size_t row, std::size_t col) {
    return "(row " + std::to_string(row) + ", column " + std::to_string(col) + ")";
}

}  // namespace detail

/// Parses comma or tab separated numbers. The delimiter is a tab when the
/// first line has one. The first line is a header when none of its cells is
/// numeric; a header starting with "subject" or "id" marks a label column.
/// Rows and columns in error messages are 1-based file positions.
inline DelimitedTable parse_delimited(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto pos = text.find('\n', start);
        if (pos == std::string_view::npos) pos = text.size();
        lines.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw invalid_input("empty table");
    const char delim = lines.front().find('\t') != std::string_view::npos ? '\t' : ',';

    DelimitedTable table;
    std::size_t first = 0;
    bool labels = false;
    {
        auto cells = detail::split(lines.front(), delim);
        bool any_numeric = false;
        for (auto c : cells) any_numeric = any_numeric || detail::parse_number(c).has_value();
        if (!any_numeric) {
            first = 1;
            const std::string_view lead = cells.front();
            labels = lead == "subject" || lead == "subject_id" || lead == "id";
            for (std::size_t k = labels ? 1 : 0; k < cells.size(); ++k) table.column_names.emplace_back(cells[k]);
        }
    }
    if (first >= lines.size()) throw invalid_input("table has a header but no data rows");

    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    for (std::size_t r = first; r < lines.size(); ++r) {
        auto cells = detail::split(lines[r], delim);
        if (cells.size() == 1 && cells[0].empty())
            throw invalid_input("blank line at " + detail::where(r + 1, 1));
        const std::size_t n = cells.size() - (labels ? 1 : 0);
        if (rows == 0)
            cols = n;
        else if (n != cols)
            throw invalid_input("ragged table: row " + std::to_string(r + 1) + " has " + std::to_string(n) +
                                " values, expected " + std::to_string(cols));
        if (!table.column_names.empty() && n != table.column_names.size())
            throw invalid_input("row " + std::to_string(r + 1) + " does not match the header width");
        if (labels) table.row_names.emplace_back(cells[0]);
        for (std::size_t c = labels ? 1 : 0; c < cells.size(); ++c) {
            if (cells[c].empty()) throw invalid_input("blank cell at " + detail::where(r + 1, c + 1));
            auto v = detail::parse_number(cells[c]);
            if (!v) throw invalid_input("non-numeric cell '" + std::string(cells[c]) + "' at " + detail::where(r + 1, c + 1));
            if (!std::isfinite(*v)) throw invalid_input("non-finite cell at " + detail::where(r + 1, c + 1));
            values.push_back(*v);
        }
        ++rows;
    }
    if (cols == 0) throw invalid_input("table has no columns");
    table.values = Matrix<double>(rows, cols);
    table.values.data() = std::move(values);
    return table;
}

inline DelimitedTable read_delimited(const std::string& path) { return parse_delimited(read_file(path)); }

/// J x m contrast matrix, subjects along rows.
inline SubjectContrasts read_matrix(const std::string& path, std::optional<VolumeGeometry> geometry = std::nullopt) {
    auto t = read_delimited(path);
    return make_contrasts(std::move(t.values), std::move(geometry), std::move(t.row_names));
}

inline std::string format_number(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

inline std::string format_delimited(const Matrix<double>& values, const std::vector<std::string>& header = {},
                                    char delim = ',') {
    std::string out;
    auto put_row = [&](auto&& cells) {
        bool first = true;
        for (const auto& c : cells) {
            if (!first) out += delim;
            out += c;
            first = false;
        }
        out += '\n';
    };
    if (!header.empty()) put_row(header);
    std::vector<std::string> cells(values.cols());
    for (std::size_t r = 0; r < values.rows(); ++r) {
        for (std::size_t c = 0; c < values.cols(); ++c) cells[c] = format_number(values(r, c));
        put_row(cells);
    }
    return out;
}

inline void write_matrix(const std::string& path, const Matrix<double>& values, const std::vector<std::string>& header = {},
                         char delim = ',') {
    write_file(path, format_delimited(values, header, delim));
}

}  // namespace ptdp::io
