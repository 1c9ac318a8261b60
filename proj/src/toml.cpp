#include "morekit/toml.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace morekit::toml {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// strip an unquoted trailing comment
std::string strip_comment(const std::string& s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_string = !in_string;
        if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
}

Value parse_value(const std::string& raw, const std::string& where) {
    const std::string v = trim(raw);
    if (v.empty()) throw std::runtime_error(where + ": empty value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') throw std::runtime_error(where + ": unterminated string");
        std::string out;
        for (std::size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\' && i + 2 < v.size()) {
                ++i;
                switch (v[i]) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: throw std::runtime_error(where + ": unsupported escape");
                }
            } else {
                out += v[i];
            }
        }
        return out;
    }
    if (v == "true") return true;
    if (v == "false") return false;
    // integer if it parses fully without . e E
    const bool looks_float = v.find_first_of(".eE") != std::string::npos;
    char* end = nullptr;
    if (!looks_float) {
        const long long i = std::strtoll(v.c_str(), &end, 10);
        if (end && *end == '\0') return static_cast<std::int64_t>(i);
    }
    const double d = std::strtod(v.c_str(), &end);
    if (end && *end == '\0') return d;
    throw std::runtime_error(where + ": cannot parse value '" + v + "'");
}

}  // namespace

Table parse_string(const std::string& text, const std::string& context) {
    Table table;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = context + ":" + std::to_string(line_no);
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw std::runtime_error(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw std::runtime_error(where + ": empty section name");
            table.sections[section];  // record even if empty
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw std::runtime_error(where + ": empty key");
        if (section.empty()) throw std::runtime_error(where + ": key outside any [section]");
        auto& sec = table.sections[section];
        if (sec.count(key)) throw std::runtime_error(where + ": duplicate key '" + key + "'");
        sec[key] = parse_value(line.substr(eq + 1), where);
    }
    return table;
}

Table parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_string(text, path);
}

bool Table::has(const std::string& section, const std::string& key) const {
    const auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
}

namespace {

const Value* find(const Table& t, const std::string& section, const std::string& key) {
    const auto s = t.sections.find(section);
    if (s == t.sections.end()) return nullptr;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    return &k->second;
}

[[noreturn]] void type_error(const std::string& section, const std::string& key, const char* want) {
    throw std::runtime_error("config key [" + section + "] " + key + " has the wrong type (expected " +
                             want + ")");
}

}  // namespace

bool Table::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const Value* v = find(*this, section, key);
    if (!v) return fallback;
    if (const bool* b = std::get_if<bool>(v)) return *b;
    type_error(section, key, "bool");
}

std::int64_t Table::get_int(const std::string& section, const std::string& key, std::int64_t fallback) const {
    const Value* v = find(*this, section, key);
    if (!v) return fallback;
    if (const std::int64_t* i = std::get_if<std::int64_t>(v)) return *i;
    type_error(section, key, "integer");
}

double Table::get_double(const std::string& section, const std::string& key, double fallback) const {
    const Value* v = find(*this, section, key);
    if (!v) return fallback;
    if (const double* d = std::get_if<double>(v)) return *d;
    if (const std::int64_t* i = std::get_if<std::int64_t>(v)) return static_cast<double>(*i);
    type_error(section, key, "float");
}

std::string Table::get_string(const std::string& section, const std::string& key,
                              const std::string& fallback) const {
    const Value* v = find(*this, section, key);
    if (!v) return fallback;
    if (const std::string* s = std::get_if<std::string>(v)) return *s;
    type_error(section, key, "string");
}

}  // namespace morekit::toml
