#include "bikeflow/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bikeflow/errors.hpp"

namespace bikeflow {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw DataError("failed writing '" + path + "'");
}

CsvReader::CsvReader(const std::string& path) : text_(read_text_file(path)), name_(path) {}

CsvReader::CsvReader(std::istream& in, std::string name) : name_(std::move(name)) {
    std::ostringstream ss;
    ss << in.rdbuf();
    text_ = ss.str();
}

std::optional<std::vector<std::string>> CsvReader::next() {
    for (;;) {
        if (pos_ >= text_.size()) return std::nullopt;
        // Skip blank lines.
        if (text_[pos_] == '\n' || text_[pos_] == '\r') {
            if (text_[pos_] == '\r' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '\n') ++pos_;
            ++pos_;
            ++current_line_;
            continue;
        }
        break;
    }
    record_line_ = current_line_;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool was_quoted = false;
    while (pos_ < text_.size()) {
        const char ch = text_[pos_];
        if (in_quotes) {
            if (ch == '"') {
                if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '"') {
                    field.push_back('"');
                    pos_ += 2;
                    continue;
                }
                in_quotes = false;
                ++pos_;
                continue;
            }
            if (ch == '\n') ++current_line_;
            field.push_back(ch);
            ++pos_;
            continue;
        }
        if (ch == '"') {
            if (!field.empty() || was_quoted) {
                throw ParseError(name_, current_line_, "unexpected quote inside unquoted field");
            }
            in_quotes = true;
            was_quoted = true;
            ++pos_;
            continue;
        }
        if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
            ++pos_;
            continue;
        }
        if (ch == '\r' || ch == '\n') {
            if (ch == '\r' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '\n') ++pos_;
            ++pos_;
            ++current_line_;
            fields.push_back(std::move(field));
            return fields;
        }
        if (was_quoted) throw ParseError(name_, current_line_, "characters after closing quote");
        field.push_back(ch);
        ++pos_;
    }
    if (in_quotes) throw ParseError(name_, record_line_, "unterminated quoted field");
    fields.push_back(std::move(field));
    return fields;
}

void CsvReader::expect_header(const std::vector<std::string>& expected) {
    auto header = next();
    if (!header) throw ParseError(name_, 1, "missing header");
    if (*header != expected) {
        throw ParseError(name_, record_line_, "unexpected header '" + csv_join(*header) +
                                                  "', expected '" + csv_join(expected) + "'");
    }
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string csv_join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += csv_escape(fields[i]);
    }
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::optional<double> parse_double(std::string_view text) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return v;
}

std::optional<long long> parse_int(std::string_view text) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    if (text.empty()) return std::nullopt;
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return v;
}

}  // namespace bikeflow
