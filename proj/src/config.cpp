#include "sdapd/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sdapd/errors.hpp"

namespace sdapd {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

}  // namespace

void KeyValueSection::set(std::string key, std::string value, int line) {
  auto it = entries_.find(key);
  if (it != entries_.end()) {
    throw ConfigError("duplicate key '" + key + "' (first set on line " +
                          std::to_string(it->second.line) + ")",
                      line);
  }
  entries_.emplace(std::move(key), KeyValueEntry{std::move(value), line, false});
}

bool KeyValueSection::contains(std::string_view key) const { return entries_.contains(key); }

const KeyValueEntry* KeyValueSection::find(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  it->second.used = true;
  return &it->second;
}

std::optional<std::string> KeyValueSection::get_string(std::string_view key) const {
  const auto* e = find(key);
  if (!e) return std::nullopt;
  return e->value;
}

std::optional<double> KeyValueSection::get_double(std::string_view key) const {
  const auto* e = find(key);
  if (!e) return std::nullopt;
  auto v = parse_double(e->value);
  if (!v) throw ConfigError("'" + std::string(key) + "' expects a number, got '" + e->value + "'", e->line);
  return v;
}

std::optional<std::int64_t> KeyValueSection::get_int(std::string_view key) const {
  const auto* e = find(key);
  if (!e) return std::nullopt;
  std::string_view text = trim(e->value);
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec == std::errc() && ptr == text.data() + text.size()) return value;
  // Accept integral values written in floating form, e.g. 1e9.
  auto d = parse_double(text);
  if (d && *d == static_cast<double>(static_cast<std::int64_t>(*d)) && std::abs(*d) < 9.2e18) {
    return static_cast<std::int64_t>(*d);
  }
  throw ConfigError("'" + std::string(key) + "' expects an integer, got '" + e->value + "'", e->line);
}

std::optional<bool> KeyValueSection::get_bool(std::string_view key) const {
  const auto* e = find(key);
  if (!e) return std::nullopt;
  std::string v(trim(e->value));
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
  if (v == "off" || v == "false" || v == "no" || v == "0") return false;
  throw ConfigError("'" + std::string(key) + "' expects on/off, got '" + e->value + "'", e->line);
}

std::optional<std::vector<double>> KeyValueSection::get_double_list(std::string_view key) const {
  const auto* e = find(key);
  if (!e) return std::nullopt;
  std::vector<double> out;
  std::string_view rest = e->value;
  while (true) {
    auto comma = rest.find(',');
    auto item = trim(rest.substr(0, comma));
    if (!item.empty()) {
      auto v = parse_double(item);
      if (!v) {
        throw ConfigError("'" + std::string(key) + "': '" + std::string(item) + "' is not a number",
                          e->line);
      }
      out.push_back(*v);
    }
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

void KeyValueSection::reject_unused() const {
  for (const auto& [key, entry] : entries_) {
    if (!entry.used) {
      std::string where = name_.empty() ? std::string{} : " in [" + name_ + "]";
      throw ConfigError("unknown key '" + key + "'" + where, entry.line);
    }
  }
}

KeyValueDocument KeyValueDocument::parse(std::string_view text) {
  KeyValueDocument doc;
  doc.sections_.emplace_back("", 0);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    auto hash = raw.find('#');
    std::string_view line = trim(raw.substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", line_no);
      std::string name(trim(line.substr(1, line.size() - 2)));
      if (name.empty()) throw ConfigError("empty section name", line_no);
      if (doc.section(name)) throw ConfigError("duplicate section [" + name + "]", line_no);
      doc.sections_.emplace_back(std::move(name), line_no);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no);
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("missing key before '='", line_no);
    doc.sections_.back().set(std::move(key), std::move(value), line_no);
  }
  return doc;
}

KeyValueDocument KeyValueDocument::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const KeyValueSection* KeyValueDocument::section(std::string_view name) const {
  for (const auto& s : sections_) {
    if (s.name() == name) return &s;
  }
  return nullptr;
}

const KeyValueSection& KeyValueDocument::section_or_empty(std::string_view name) const {
  static const KeyValueSection kEmpty;
  const auto* s = section(name);
  return s ? *s : kEmpty;
}

void KeyValueDocument::reject_unused() const {
  for (const auto& s : sections_) s.reject_unused();
}

void KeyValueDocument::reject_unknown_sections(const std::vector<std::string_view>& known) const {
  for (const auto& s : sections_) {
    if (s.name().empty()) continue;
    if (std::find(known.begin(), known.end(), s.name()) == known.end()) {
      throw ConfigError("unknown section [" + s.name() + "]", s.line());
    }
  }
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

}  // namespace sdapd
