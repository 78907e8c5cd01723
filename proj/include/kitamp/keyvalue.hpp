#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kitamp/common.hpp"

namespace kitamp {

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_double(std::string_view s) {
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    double v{};
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

} // namespace detail

/// Flat `key = value` configuration. One key per line, `#` starts a comment,
/// later assignments of the same key win (this is how flag overrides are layered).
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>") {
        KeyValueConfig cfg;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string t = detail::trim(line);
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos) throw ParseError(source, lineno, "expected key = value");
            std::string key = detail::trim(std::string_view(t).substr(0, eq));
            if (key.empty()) throw ParseError(source, lineno, "empty key");
            cfg.set(key, detail::trim(std::string_view(t).substr(eq + 1)));
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open config file: " + path);
        return parse(in, path);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Applies a `key=value` override string.
    void set_assignment(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw InputError("override must be key=value: " + assignment);
        set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::optional<std::string> get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string string_or(const std::string& key, const std::string& fallback) const {
        return get_string(key).value_or(fallback);
    }

    std::string require_string(const std::string& key) const {
        auto v = get_string(key);
        if (!v) throw InputError("missing required config key: " + key);
        return *v;
    }

    std::optional<double> get_double(const std::string& key) const {
        auto s = get_string(key);
        if (!s) return std::nullopt;
        auto v = detail::parse_double(*s);
        if (!v) throw InputError("config key " + key + " is not a number: '" + *s + "'");
        return v;
    }

    double double_or(const std::string& key, double fallback) const {
        return get_double(key).value_or(fallback);
    }

    double require_double(const std::string& key) const {
        auto v = get_double(key);
        if (!v) throw InputError("missing required config key: " + key);
        return *v;
    }

    long long int_or(const std::string& key, long long fallback) const {
        auto s = get_string(key);
        if (!s) return fallback;
        long long v{};
        const std::string t = detail::trim(*s);
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc{} || ptr != t.data() + t.size())
            throw InputError("config key " + key + " is not an integer: '" + *s + "'");
        return v;
    }

    bool bool_or(const std::string& key, bool fallback) const {
        auto s = get_string(key);
        if (!s) return fallback;
        if (*s == "true" || *s == "1" || *s == "yes" || *s == "on") return true;
        if (*s == "false" || *s == "0" || *s == "no" || *s == "off") return false;
        throw InputError("config key " + key + " is not a boolean: '" + *s + "'");
    }

    /// Unknown keys are hard errors. `allowed` entries ending in '.' match any key with that prefix.
    void check_keys(const std::set<std::string>& allowed) const {
        for (const auto& [key, value] : values_) {
            bool ok = allowed.count(key) != 0;
            for (const auto& a : allowed) {
                if (!ok && !a.empty() && a.back() == '.' && key.rfind(a, 0) == 0) ok = true;
            }
            if (!ok) throw InputError("unknown config key: " + key);
        }
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace kitamp
