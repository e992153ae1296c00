#pragma once

#include "lqjump/error.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

namespace lqjump::csv {

/// Shortest-safe round-trip text: 17 significant digits, dot decimal point,
/// independent of the global locale.
inline std::string format(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        fail(ErrorCode::ParseError, "not a number: '" + s + "'");
    return v;
}

/// Accumulates rows in memory and writes the file in one go.
class Writer {
public:
    explicit Writer(std::vector<std::string> header) : columns_(header.size()) { row(header); }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_) fail(ErrorCode::InvalidArgument, "CSV row width differs from header");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += quote(cells[i]);
        }
        text_ += '\n';
    }

    void numbers(const std::vector<double>& values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format(v));
        row(cells);
    }

    const std::string& text() const noexcept { return text_; }

    void save(const std::filesystem::path& path) const {
        std::error_code ec;
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
        std::ofstream out(path, std::ios::binary);
        if (!out) fail(ErrorCode::IOError, "cannot open " + path.string() + " for writing");
        out << text_;
        if (!out) fail(ErrorCode::IOError, "write to " + path.string() + " failed");
    }

private:
    static std::string quote(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + '"';
    }

    std::size_t columns_;
    std::string text_;
};

}  // namespace lqjump::csv
