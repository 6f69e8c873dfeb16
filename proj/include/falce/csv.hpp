/**
 * @file csv.hpp
 * @brief Minimal RFC 4180-style CSV reader used by the manifest parsers
 */
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace falce::csv {

struct Row {
    std::size_t line = 0;  // 1-based line number in the source file
    std::vector<std::string> fields;
};

struct Table {
    std::vector<std::string> header;
    std::vector<Row> rows;

    /// Column index by header name.
    std::optional<std::size_t> column(const std::string& name) const;
};

/// Parses text with a header line; blank lines are skipped. Throws IoError with
/// `origin` and the line number on unterminated quotes.
Table parse(const std::string& text, const std::string& origin);

Table read_file(const std::filesystem::path& path);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(const std::string& field);

std::string trim(const std::string& s);

/// Strict numeric parsing: whole field must be consumed.
std::optional<double> to_double(const std::string& s);
std::optional<long long> to_int(const std::string& s);

}  // namespace falce::csv
