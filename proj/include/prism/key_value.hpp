#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace prism {

// Flat `key=value` text: one pair per line, '#' starts a comment, whitespace
// around keys and values is ignored.
class KeyValues {
public:
    static KeyValues parse(const std::string& text, const std::string& origin = "<text>");
    static KeyValues read(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;

    long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;

    std::vector<std::string> keys() const;
    std::string to_text() const;
    void write(const std::filesystem::path& path) const;

private:
    std::string origin_ = "<text>";
    std::map<std::string, std::string> values_;
};

std::vector<std::string> split_list(const std::string& text, char sep = ',');

}  // namespace prism
