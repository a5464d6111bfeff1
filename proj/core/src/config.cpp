#include "weatherlpr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "weatherlpr/error.hpp"

namespace wlpr {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    return out;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (cfg.has(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::string Config::get(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string Config::require(const std::string& key) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? parse_number<double>(key, get(key, {})) : (used_.insert(key), fallback);
}

long long Config::get_int(const std::string& key, long long fallback) const {
    return has(key) ? parse_number<long long>(key, get(key, {})) : (used_.insert(key), fallback);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? parse_number<std::uint64_t>(key, get(key, {})) : (used_.insert(key), fallback);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) {
        used_.insert(key);
        return fallback;
    }
    const std::string v = get(key, {});
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
    if (!has(key)) {
        used_.insert(key);
        return fallback;
    }
    std::vector<std::string> out;
    std::istringstream in(get(key, {}));
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void Config::reject_unused() const {
    for (const auto& [k, v] : values_)
        if (!used_.count(k)) throw ConfigError("config: unknown key '" + k + "'");
}

}  // namespace wlpr
