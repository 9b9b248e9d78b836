#pragma once

// Flat, namespaced key = value configuration files.
//
//   # comment
//   dataset.n_traj = 500
//   dataset.init_lo = -1, -1
//
// Values are kept as strings and converted on access. Later assignments win,
// which is how command-line overrides are layered on top of a file.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "blskoop/numerics.hpp"

namespace blskoop {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>") {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) {
                line.erase(hash);
            }
            line = detail::trim(line);
            if (line.empty()) {
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            }
            auto key = detail::trim(line.substr(0, eq));
            if (key.empty()) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            }
            cfg.values_[key] = detail::trim(line.substr(eq + 1));
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot open config file '" + path + "'");
        }
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void set(const std::string& key, double value) { values_[key] = detail::format_double(value); }
    void set(const std::string& key, long long value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, int value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }
    void set(const std::string& key, const Vector& value) {
        std::string s;
        for (Eigen::Index i = 0; i < value.size(); ++i) {
            s += (i ? ", " : "") + detail::format_double(value(i));
        }
        values_[key] = s;
    }

    /// Copies every entry of `other` over this config.
    void merge(const KeyValueConfig& other) {
        for (const auto& [k, v] : other.values_) {
            values_[k] = v;
        }
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        long long v = 0;
        const auto& s = it->second;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
        }
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        if (it->second == "true" || it->second == "1" || it->second == "yes") {
            return true;
        }
        if (it->second == "false" || it->second == "0" || it->second == "no") {
            return false;
        }
        throw ConfigError("config key '" + key + "': expected a boolean, got '" + it->second + "'");
    }

    Vector get_vector(const std::string& key, const Vector& fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        std::vector<double> parts;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            parts.push_back(to_double(key, detail::trim(item)));
        }
        return Eigen::Map<Vector>(parts.data(), static_cast<Eigen::Index>(parts.size()));
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

    /// Sorted `key = value` lines; parse(to_string()) reproduces the config.
    std::string to_string() const {
        std::string out;
        for (const auto& [k, v] : values_) {
            out += k + " = " + v + "\n";
        }
        return out;
    }

private:
    static double to_double(const std::string& key, const std::string& s) {
        double v = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
        }
        return v;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace blskoop
