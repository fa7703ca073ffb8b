#pragma once

// Line-oriented key = value configuration text with optional [section]
// headers and '#' comments. Every entry remembers its line so that
// semantic errors can point at the offending line.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sdapd {

struct KeyValueEntry {
  std::string value;
  int line = 0;
  mutable bool used = false;
};

class KeyValueSection {
 public:
  explicit KeyValueSection(std::string name = {}, int line = 0)
      : name_(std::move(name)), line_(line) {}

  const std::string& name() const { return name_; }
  int line() const { return line_; }

  void set(std::string key, std::string value, int line);
  bool contains(std::string_view key) const;
  const KeyValueEntry* find(std::string_view key) const;

  std::optional<std::string> get_string(std::string_view key) const;
  std::optional<double> get_double(std::string_view key) const;
  std::optional<std::int64_t> get_int(std::string_view key) const;
  std::optional<bool> get_bool(std::string_view key) const;
  std::optional<std::vector<double>> get_double_list(std::string_view key) const;

  double get_double_or(std::string_view key, double fallback) const {
    return get_double(key).value_or(fallback);
  }

  // Throws ConfigError naming the first key nobody asked for.
  void reject_unused() const;

  const std::map<std::string, KeyValueEntry, std::less<>>& entries() const { return entries_; }

 private:
  std::string name_;
  int line_;
  std::map<std::string, KeyValueEntry, std::less<>> entries_;
};

class KeyValueDocument {
 public:
  // Entries before the first header land in the unnamed section "".
  static KeyValueDocument parse(std::string_view text);
  static KeyValueDocument load(const std::string& path);

  const KeyValueSection* section(std::string_view name) const;
  const KeyValueSection& section_or_empty(std::string_view name) const;
  bool has_section(std::string_view name) const { return section(name) != nullptr; }

  void reject_unused() const;
  void reject_unknown_sections(const std::vector<std::string_view>& known) const;

 private:
  std::vector<KeyValueSection> sections_;
};

// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace sdapd
