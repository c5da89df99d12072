#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <string>

#include "cerf/error.hpp"
#include "cerf/io.hpp"

namespace cerf::io {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

bool valid_name(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    });
}

const char* type_name(ValueType type) {
    switch (type) {
        case ValueType::integer: return "an integer";
        case ValueType::unsigned_integer: return "a nonnegative integer";
        case ValueType::real: return "a real number";
        case ValueType::boolean: return "true or false";
        case ValueType::text: return "text";
        case ValueType::real_list: return "a comma-separated list of reals";
        case ValueType::integer_list: return "a comma-separated list of integers";
    }
    return "a value";
}

template <class T>
bool parse_number(const std::string& s, T& value) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    return !s.empty() && ec == std::errc() && ptr == last;
}

std::string shortest(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    (void)ec;
    return std::string(buf, ptr);
}

std::vector<std::string> list_items(const std::string& s) {
    std::vector<std::string> items;
    if (trim(s).empty()) return items;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) items.push_back(trim(item));
    if (!s.empty() && trim(s).back() == ',') items.emplace_back();
    return items;
}

// Canonical spelling of `value`, or nullopt if it does not have the type.
std::optional<std::string> canonicalize(const std::string& raw, ValueType type) {
    const std::string value = trim(raw);
    switch (type) {
        case ValueType::integer: {
            long long v = 0;
            if (!parse_number(value, v)) return std::nullopt;
            return std::to_string(v);
        }
        case ValueType::unsigned_integer: {
            std::uint64_t v = 0;
            if (value.empty() || value[0] == '-' || !parse_number(value, v)) return std::nullopt;
            return std::to_string(v);
        }
        case ValueType::real: {
            double v = 0.0;
            if (!parse_number(value, v) || !std::isfinite(v)) return std::nullopt;
            return shortest(v);
        }
        case ValueType::boolean:
            if (value == "true" || value == "yes" || value == "on" || value == "1") return std::string("true");
            if (value == "false" || value == "no" || value == "off" || value == "0") return std::string("false");
            return std::nullopt;
        case ValueType::text:
            if (value.find('\n') != std::string::npos) return std::nullopt;
            return value;
        case ValueType::real_list:
        case ValueType::integer_list: {
            std::string out;
            for (const auto& item : list_items(value)) {
                const auto one = canonicalize(item, type == ValueType::real_list ? ValueType::real : ValueType::integer);
                if (!one) return std::nullopt;
                if (!out.empty()) out += ",";
                out += *one;
            }
            return out;
        }
    }
    return std::nullopt;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

ConfigText ConfigText::parse(const std::string& text, const std::string& origin) {
    ConfigText config;
    std::string section;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = origin + " line " + std::to_string(line_no);
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail_argument(where + ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            if (!valid_name(section)) fail_argument(where + ": invalid section name '" + section + "'");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) fail_argument(where + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        if (!valid_name(key)) fail_argument(where + ": invalid key '" + key + "'");
        if (section.empty()) fail_argument(where + ": key '" + key + "' appears before any [section]");
        const std::string name = section + "." + key;
        if (config.entries_.count(name)) fail_argument(where + ": duplicate key '" + name + "'");
        config.entries_[name] = {trim(t.substr(eq + 1)), where};
    }
    return config;
}

void ConfigText::set(const std::string& name, const std::string& value, const std::string& where) {
    const auto dot = name.find('.');
    if (dot == std::string::npos || !valid_name(name.substr(0, dot)) || !valid_name(name.substr(dot + 1)))
        fail_argument(where + ": '" + name + "' is not of the form section.key");
    entries_[name] = {trim(value), where};
}

std::map<std::string, std::string> ConfigText::take_section(const std::string& section) {
    std::map<std::string, std::string> out;
    const std::string prefix = section + ".";
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (it->first.rfind(prefix, 0) == 0) {
            out[it->first.substr(prefix.size())] = it->second.first;
            it = entries_.erase(it);
        } else {
            ++it;
        }
    }
    return out;
}

Settings Settings::resolve(const Schema& schema, const ConfigText& text) {
    Settings s;
    for (const auto& key : schema) {
        const auto canonical = canonicalize(key.fallback, key.type);
        if (!canonical) fail_argument("schema default for '" + key.name + "' is not " + type_name(key.type));
        s.values_[key.name] = *canonical;
        s.types_[key.name] = key.type;
    }
    for (const auto& [name, entry] : text.entries()) {
        const auto type = s.types_.find(name);
        if (type == s.types_.end()) fail_argument(entry.second + ": unknown key '" + name + "'");
        const auto canonical = canonicalize(entry.first, type->second);
        if (!canonical)
            fail_argument(entry.second + ": '" + name + "' must be " + type_name(type->second) + ", got '" +
                          entry.first + "'");
        s.values_[name] = *canonical;
    }
    return s;
}

const std::string& Settings::raw(const std::string& name, ValueType type) const {
    const auto it = types_.find(name);
    if (it == types_.end()) fail_argument("setting '" + name + "' is not defined");
    if (it->second != type) fail_argument("setting '" + name + "' is " + type_name(it->second));
    return values_.at(name);
}

long long Settings::integer(const std::string& name) const {
    long long v = 0;
    parse_number(raw(name, ValueType::integer), v);
    return v;
}

std::uint64_t Settings::unsigned_integer(const std::string& name) const {
    std::uint64_t v = 0;
    parse_number(raw(name, ValueType::unsigned_integer), v);
    return v;
}

double Settings::real(const std::string& name) const {
    double v = 0.0;
    parse_number(raw(name, ValueType::real), v);
    return v;
}

bool Settings::flag(const std::string& name) const { return raw(name, ValueType::boolean) == "true"; }

const std::string& Settings::text(const std::string& name) const { return raw(name, ValueType::text); }

std::vector<double> Settings::reals(const std::string& name) const {
    std::vector<double> out;
    for (const auto& item : list_items(raw(name, ValueType::real_list))) {
        double v = 0.0;
        parse_number(item, v);
        out.push_back(v);
    }
    return out;
}

std::vector<long long> Settings::integers(const std::string& name) const {
    std::vector<long long> out;
    for (const auto& item : list_items(raw(name, ValueType::integer_list))) {
        long long v = 0;
        parse_number(item, v);
        out.push_back(v);
    }
    return out;
}

std::string Settings::canonical() const {
    std::string out;
    std::string section;
    for (const auto& [name, value] : values_) {
        const auto dot = name.find('.');
        const std::string s = name.substr(0, dot);
        if (s != section) {
            if (!out.empty()) out += "\n";
            out += "[" + s + "]\n";
            section = s;
        }
        out += name.substr(dot + 1) + " = " + value + "\n";
    }
    return out;
}

std::uint64_t Settings::hash() const { return fnv1a64(canonical()); }

}  // namespace cerf::io
