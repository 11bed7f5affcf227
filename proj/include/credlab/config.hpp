// Strict JSON config loading: every key must be consumed by the command that
// loads it, so a typo fails fast instead of silently falling back to a
// default. Command-line flags override file values; the effective config is
// echoed into the run manifest.
#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "credlab/common.hpp"

namespace credlab {

class StrictConfig {
  public:
    StrictConfig() : j_(nlohmann::json::object()) {}

    explicit StrictConfig(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParseError("cannot open config: " + path);
        try {
            in >> j_;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("config " + path + ": " + e.what());
        }
        if (!j_.is_object()) throw ParseError("config " + path + ": top level must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    T get(const std::string& key, T fallback) {
        consumed_.insert(key);
        if (!j_.contains(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("config key '" + key + "': " + e.what());
        }
    }

    // Throws on keys nobody asked for.
    void finish() const {
        for (const auto& item : j_.items())
            if (!consumed_.count(item.key()))
                throw ParseError("unknown config key '" + item.key() + "'");
    }

    const nlohmann::json& raw() const { return j_; }

  private:
    nlohmann::json j_;
    std::set<std::string> consumed_;
};

}  // namespace credlab
