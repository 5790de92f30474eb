#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "versetopics/error.hpp"
#include "versetopics/text.hpp"

namespace versetopics {

/// Sectioned `key = value` file. Keys are stored as `section.key` (or bare
/// `key` before the first section header). Lines starting with `#` or `;` are
/// comments; `#` after whitespace starts a trailing comment.
class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile parse(std::istream& in, const std::string& source = "<config>") {
    KeyValueFile kv;
    kv.source_ = source;
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string_view view = strip_comment(line);
      view = text::trim(view);
      if (view.empty()) continue;
      if (view.front() == '[') {
        if (view.back() != ']') throw InputError(source + ":" + std::to_string(line_no) + ": bad section header");
        section = std::string(text::trim(view.substr(1, view.size() - 2)));
        continue;
      }
      const auto eq = view.find('=');
      if (eq == std::string_view::npos) {
        throw InputError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      const auto key = std::string(text::trim(view.substr(0, eq)));
      if (key.empty()) throw InputError(source + ":" + std::to_string(line_no) + ": empty key");
      kv.values_[section.empty() ? key : section + "." + key] = std::string(text::trim(view.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValueFile load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    auto kv = parse(in, path.string());
    kv.base_dir_ = path.parent_path();
    return kv;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  template <class Int>
  Int get_int(const std::string& key, Int fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    Int out{};
    if (!text::parse_int(*v, out)) throw InputError(source_ + ": '" + key + "' is not an integer: " + *v);
    return out;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    double out{};
    if (!text::parse_double(*v, out)) throw InputError(source_ + ": '" + key + "' is not a number: " + *v);
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    bool out{};
    if (!text::parse_bool(*v, out)) throw InputError(source_ + ": '" + key + "' is not a boolean: " + *v);
    return out;
  }

  std::vector<std::string> get_list(const std::string& key) const {
    const auto v = get(key);
    return v ? text::split_list(*v) : std::vector<std::string>{};
  }

  /// Path value resolved against the directory holding the file.
  std::optional<std::filesystem::path> get_path(const std::string& key) const {
    const auto v = get(key);
    if (!v || v->empty()) return std::nullopt;
    std::filesystem::path p{*v};
    return p.is_absolute() ? p : base_dir_ / p;
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  const std::filesystem::path& base_dir() const noexcept { return base_dir_; }

 private:
  static std::string_view strip_comment(std::string_view line) {
    line = text::trim(line);
    if (!line.empty() && (line.front() == '#' || line.front() == ';')) return {};
    for (std::size_t i = 1; i < line.size(); ++i) {
      if (line[i] == '#' && (line[i - 1] == ' ' || line[i - 1] == '\t')) return line.substr(0, i);
    }
    return line;
  }

  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
  std::string source_ = "<config>";
};

}  // namespace versetopics
