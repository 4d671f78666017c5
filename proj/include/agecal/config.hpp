#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "agecal/csv.hpp"
#include "agecal/errors.hpp"

namespace agecal {

/// Flat key=value config text: one pair per line, '#' comments, blank lines
/// ignored.
using ConfigMap = std::map<std::string, std::string>;

namespace detail {
inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}
} // namespace detail

inline ConfigMap parse_config_text(const std::string& text, const std::string& origin) {
    ConfigMap cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string line =
            text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        cfg[key] = value;
    }
    return cfg;
}

inline ConfigMap load_config(const std::filesystem::path& path) {
    std::string text;
    for (const auto& line : read_lines(path)) text += line + "\n";
    return parse_config_text(text, path.string());
}

inline double config_double(const ConfigMap& cfg, const std::string& key, double fallback) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    return parse_double(it->second, "config key '" + key + "'");
}

inline int config_int(const ConfigMap& cfg, const std::string& key, int fallback) {
    const double v = config_double(cfg, key, static_cast<double>(fallback));
    return static_cast<int>(v);
}

inline bool config_bool(const ConfigMap& cfg, const std::string& key, bool fallback) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    if (it->second == "true" || it->second == "on" || it->second == "1") return true;
    if (it->second == "false" || it->second == "off" || it->second == "0") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + it->second + "'");
}

inline std::vector<double> config_double_list(const ConfigMap& cfg, const std::string& key,
                                              const std::vector<double>& fallback) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    std::vector<double> out;
    for (const auto& tok : split_line(it->second))
        out.push_back(parse_double(detail::trim(tok), "config key '" + key + "'"));
    return out;
}

} // namespace agecal
