#include "ctg/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ctg {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        if (!(std::islower(static_cast<unsigned char>(c)) ||
              std::isdigit(static_cast<unsigned char>(c)) || c == '_' || c == '.'))
            return false;
    }
    return true;
}

}  // namespace

Config Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

Config Config::parse(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!valid_key(key))
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": bad key '" + key + "'");
        if (cfg.values_.count(key))
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": duplicate key '" + key + "' (first at line " +
                                     std::to_string(cfg.lines_[key]) + ")");
        cfg.values_[key] = value;
        cfg.lines_[key] = lineno;
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
    values_[key] = value;
    lines_[key] = 0;
}

const std::string* Config::find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
}

double Config::get_double(const std::string& key, double def) const {
    const std::string* v = find(key);
    if (!v) return def;
    try {
        std::size_t pos = 0;
        const double x = std::stod(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': '" + *v + "' is not a number");
    }
}

int Config::get_int(const std::string& key, int def) const {
    const std::string* v = find(key);
    if (!v) return def;
    try {
        std::size_t pos = 0;
        const long x = std::stol(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing characters");
        return static_cast<int>(x);
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': '" + *v + "' is not an integer");
    }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t def) const {
    const std::string* v = find(key);
    if (!v) return def;
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing characters");
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': '" + *v +
                                 "' is not an unsigned integer");
    }
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
    const std::string* v = find(key);
    return v ? *v : def;
}

bool Config::get_bool(const std::string& key, bool def) const {
    const std::string* v = find(key);
    if (!v) return def;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw std::runtime_error("config key '" + key + "': '" + *v + "' is not a bool");
}

std::map<std::string, double> Config::get_group(const std::string& prefix) const {
    std::map<std::string, double> out;
    const std::string pre = prefix + ".";
    for (const auto& [k, v] : values_) {
        if (k.rfind(pre, 0) != 0) continue;
        out[k.substr(pre.size())] = get_double(k, 0.0);
    }
    return out;
}

void Config::reject_unknown() const {
    for (const auto& [k, v] : values_) {
        if (!consumed_.count(k))
            throw std::runtime_error(origin_ + ":" + std::to_string(lines_.at(k)) +
                                     ": unknown config key '" + k + "'");
    }
}

}  // namespace ctg
