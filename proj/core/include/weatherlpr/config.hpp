#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace wlpr {

/// Flat key/value configuration.
///
///   # comment
///   key = value
///   section.key = value      (dotted keys, no nesting beyond naming)
///   list.key = a, b, c
///
/// Keys are unique; whitespace around keys and values is trimmed. Lookups
/// remember which keys were read so unknown keys can be reported.
class Config {
public:
    Config() = default;

    static Config parse(const std::string& text, const std::string& origin = "<config>");
    static Config load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get(const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

    /// Throws ConfigError naming the first key no getter has asked for.
    void reject_unused() const;

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

}  // namespace wlpr
