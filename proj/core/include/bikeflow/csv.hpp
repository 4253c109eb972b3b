#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bikeflow {

/// Minimal RFC-4180 reader: comma separated, double-quoted fields with ""
/// escapes, CRLF or LF line endings. Quoted fields may span lines.
class CsvReader {
public:
    /// Opens `path`; throws DataError if the file cannot be read.
    explicit CsvReader(const std::string& path);
    CsvReader(std::istream& in, std::string name);

    /// Next record, or nullopt at end of input. Blank lines are skipped.
    std::optional<std::vector<std::string>> next();

    /// Line number (1-based) at which the last returned record started.
    std::size_t line() const noexcept { return record_line_; }
    const std::string& name() const noexcept { return name_; }

    /// Reads the header and checks it equals `expected` exactly.
    void expect_header(const std::vector<std::string>& expected);

private:
    std::string text_;
    std::size_t pos_ = 0;
    std::size_t current_line_ = 1;
    std::size_t record_line_ = 0;
    std::string name_;
};

/// Quotes a field when it contains a comma, quote, or newline.
std::string csv_escape(std::string_view field);

/// Joins fields into one CSV line (no trailing newline).
std::string csv_join(const std::vector<std::string>& fields);

/// Shortest decimal that round-trips is not required; this prints 17
/// significant digits, which always round-trips a double.
std::string format_double(double v);

/// Fixed notation with the given number of decimals.
std::string format_fixed(double v, int decimals);

/// Strict parse of a decimal number. Returns nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

/// Writes `content` to `path`, replacing it. Throws DataError on failure.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace bikeflow
