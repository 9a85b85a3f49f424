#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unite {

// Flat `key = value` text with `[section]` headers. Keys inside a section are
// addressed as "section.key"; keys before the first header have no prefix.
// `#` and `;` start comment lines.
class Config {
public:
    static Config parse(std::string_view text, const std::string& origin = "<config>");
    static Config load(const std::string& path);

    // Accepts "key=value" as given on the command line.
    void set_assignment(std::string_view assignment);
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    bool has_section(std::string_view section) const;
    std::vector<std::string> keys() const;

    std::optional<std::string> get(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated lists.
    std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
    std::vector<std::uint64_t> get_uints(const std::string& key, std::vector<std::uint64_t> fallback) const;
    std::vector<std::string> get_strings(const std::string& key, std::vector<std::string> fallback) const;

    // Directory of the file the config was loaded from; relative paths in
    // values resolve against it.
    const std::string& base_dir() const { return base_dir_; }
    std::string resolve_path(const std::string& value) const;

private:
    std::map<std::string, std::string> values_;
    std::string base_dir_;
};

std::vector<std::string> split_list(std::string_view text);

}  // namespace unite
