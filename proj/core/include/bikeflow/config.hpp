#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace bikeflow {

/// Flat key=value text. `[section]` lines prefix the following keys with
/// "section."; '#' starts a comment line.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    /// Throws ConfigError on malformed lines or repeated keys.
    static KeyValueConfig parse(const std::string& text, const std::string& source = "config");
    static KeyValueConfig load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    /// Typed getters; a present but unparsable value throws ConfigError
    /// naming the key. The single-argument forms require the key.
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Throws ConfigError listing keys outside `known` (exact keys) whose
    /// first section is in `sections` (or any key when `sections` is empty).
    void reject_unknown(const std::set<std::string>& known, const std::set<std::string>& sections = {}) const;

    const std::map<std::string, std::string>& values() const noexcept { return values_; }
    const std::string& source() const noexcept { return source_; }

    /// Sorted key=value lines.
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
    std::string source_ = "config";
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace bikeflow
