#include "unite/config.hpp"

#include <charconv>
#include <filesystem>

#include <fmt/format.h>

#include "unite/error.hpp"
#include "unite/io.hpp"

namespace unite {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::uint64_t to_uint(const std::string& key, std::string_view text) {
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size()) {
        throw UsageError(fmt::format("config key '{}': '{}' is not a non-negative integer", key, text));
    }
    return v;
}

double to_double(const std::string& key, std::string_view text) {
    try {
        return parse_double(text);
    } catch (const std::invalid_argument&) {
        throw UsageError(fmt::format("config key '{}': '{}' is not a number", key, text));
    }
}

}  // namespace

std::vector<std::string> split_list(std::string_view text) {
    std::vector<std::string> out;
    for (auto part : split_fields(text, ',')) {
        const auto t = trim(part);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

Config Config::parse(std::string_view text, const std::string& origin) {
    Config cfg;
    std::string section;
    std::size_t line_no = 0;
    for (auto raw : split_lines(text)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw UsageError(fmt::format("{}:{}: malformed section header", origin, line_no));
            }
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw UsageError(fmt::format("{}:{}: expected 'key = value'", origin, line_no));
        }
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw UsageError(fmt::format("{}:{}: empty key", origin, line_no));
        const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
        cfg.values_[full] = std::string(trim(line.substr(eq + 1)));
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
    Config cfg = parse(text, path);
    cfg.base_dir_ = std::filesystem::path(path).parent_path().string();
    return cfg;
}

void Config::set_assignment(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || trim(assignment.substr(0, eq)).empty()) {
        throw UsageError(fmt::format("override '{}' is not of the form key=value", assignment));
    }
    set(std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1))));
}

bool Config::has_section(std::string_view section) const {
    const std::string prefix = std::string(section) + ".";
    auto it = values_.lower_bound(prefix);
    return it != values_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

std::vector<std::string> Config::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

std::optional<std::string> Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    return v ? to_double(key, *v) : fallback;
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    return v ? to_uint(key, *v) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw UsageError(fmt::format("config key '{}': '{}' is not a boolean", key, *v));
}

std::vector<double> Config::get_doubles(const std::string& key, std::vector<double> fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(*v)) out.push_back(to_double(key, item));
    return out;
}

std::vector<std::uint64_t> Config::get_uints(const std::string& key, std::vector<std::uint64_t> fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(*v)) out.push_back(to_uint(key, item));
    return out;
}

std::vector<std::string> Config::get_strings(const std::string& key, std::vector<std::string> fallback) const {
    auto v = get(key);
    return v ? split_list(*v) : fallback;
}

std::string Config::resolve_path(const std::string& value) const {
    const std::filesystem::path p(value);
    if (p.is_absolute() || base_dir_.empty()) return value;
    return (std::filesystem::path(base_dir_) / p).lexically_normal().string();
}

}  // namespace unite
