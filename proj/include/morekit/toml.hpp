#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace morekit::toml {

/// Minimal TOML subset: [section] headers, key = value pairs, # comments,
/// quoted strings, booleans, integers and floats. Enough for run configs;
/// arrays and nested tables are not supported.
using Value = std::variant<bool, std::int64_t, double, std::string>;

struct Table {
    // section -> key -> value, with insertion order kept for error messages
    std::map<std::string, std::map<std::string, Value>> sections;

    bool has(const std::string& section, const std::string& key) const;

    /// Typed getters; throw std::runtime_error on a missing key or a type
    /// mismatch (integers coerce to double where a double is requested).
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
};

Table parse_file(const std::string& path);
Table parse_string(const std::string& text, const std::string& context = "<string>");

}  // namespace morekit::toml
