#include "bikeflow/config.hpp"

#include <cstdio>

#include "bikeflow/csv.hpp"
#include "bikeflow/errors.hpp"

namespace bikeflow {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
    KeyValueConfig cfg;
    cfg.source_ = source;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const std::string where = source + " line " + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) throw ConfigError(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(where + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (cfg.values_.count(full)) throw ConfigError(where + ": key '" + full + "' repeated");
        cfg.values_[full] = trim(line.substr(eq + 1));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const DataError& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    return parse(text, path);
}

std::string KeyValueConfig::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key) const {
    const std::string s = get_string(key);
    auto v = parse_double(s);
    if (!v) throw ConfigError(source_ + ": key '" + key + "' is not a number: '" + s + "'");
    return *v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key) const {
    const std::string s = get_string(key);
    auto v = parse_int(s);
    if (!v) throw ConfigError(source_ + ": key '" + key + "' is not an integer: '" + s + "'");
    return *v;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key) const {
    const std::string s = get_string(key);
    std::uint64_t v = 0;
    if (s.empty()) throw ConfigError(source_ + ": key '" + key + "' is empty");
    for (char c : s) {
        if (c < '0' || c > '9') throw ConfigError(source_ + ": key '" + key + "' is not an unsigned integer: '" + s + "'");
        const std::uint64_t next = v * 10 + static_cast<std::uint64_t>(c - '0');
        if (next / 10 != v) throw ConfigError(source_ + ": key '" + key + "' overflows");
        v = next;
    }
    return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string s = get_string(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(source_ + ": key '" + key + "' is not a boolean: '" + s + "'");
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& known, const std::set<std::string>& sections) const {
    std::string bad;
    for (const auto& [k, v] : values_) {
        const std::string first = k.substr(0, k.find('.'));
        if (!sections.empty() && !sections.count(first)) continue;
        if (!known.count(k)) bad += (bad.empty() ? "" : ", ") + k;
    }
    if (!bad.empty()) throw ConfigError(source_ + ": unknown key(s): " + bad);
}

std::string KeyValueConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

std::uint64_t fnv1a(const std::string& bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace bikeflow
