#pragma once
// key=value configuration files.
//
// Lines are `key = value`, `#` starts a comment, keys are dotted lowercase
// identifiers.  Every key read by a consumer is marked; reject_unknown()
// throws for any key that nothing consumed, so typos fail loudly instead of
// silently falling back to defaults.

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace ctg {

class Config {
public:
    Config() = default;

    static Config load_file(const std::string& path);
    static Config parse(const std::string& text, const std::string& origin);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    // Each getter returns the default when the key is absent and marks the
    // key as consumed otherwise.
    double get_double(const std::string& key, double def) const;
    int get_int(const std::string& key, int def) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
    std::string get_string(const std::string& key, const std::string& def) const;
    bool get_bool(const std::string& key, bool def) const;

    // Keys under `prefix.` (e.g. synth.condition_mix.*) as suffix -> value.
    std::map<std::string, double> get_group(const std::string& prefix) const;

    // Throws if any key was never consumed by a getter.
    void reject_unknown() const;

    // Command-line overrides (highest precedence).
    void set(const std::string& key, const std::string& value);

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, int> lines_;        // key -> line number (0 = CLI)
    mutable std::set<std::string> consumed_;
    std::string origin_ = "<none>";

    const std::string* find(const std::string& key) const;
};

}  // namespace ctg
