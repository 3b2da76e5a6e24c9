// config.hpp
//
// Flat key=value configuration files. '#' starts a comment, blank lines are
// skipped, keys may be dotted ("train.lr"). Values stay strings until a typed
// getter is called, so CLI overrides are just another assignment.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dmskit::config {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        Config cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) +
                                         ": expected key=value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) +
                                         ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    // "key=value" as given on the command line; later assignments win.
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config override: expected key=value, got '" + assignment + "'");
        const std::string key = trim(assignment.substr(0, eq));
        if (key.empty()) throw std::runtime_error("config override: empty key");
        values_[key] = trim(assignment.substr(eq + 1));
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("config: missing key '" + key + "'");
        return it->second;
    }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::int64_t get_int(const std::string& key) const { return parse_int(key, get_string(key)); }
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    double get_double(const std::string& key) const { return parse_double(key, get_string(key)); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    bool get_bool(const std::string& key) const {
        const std::string v = get_string(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::runtime_error("config: key '" + key + "' is not a boolean: '" + v + "'");
    }
    bool get_bool(const std::string& key, bool fallback) const {
        return has(key) ? get_bool(key) : fallback;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::int64_t parse_int(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            const std::int64_t r = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw std::runtime_error("config: key '" + key + "' is not an integer: '" + v + "'");
        }
    }
    static double parse_double(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            const double r = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw std::runtime_error("config: key '" + key + "' is not a number: '" + v + "'");
        }
    }

    std::map<std::string, std::string> values_;
};

}  // namespace dmskit::config
