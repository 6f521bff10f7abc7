#ifndef KLABC_CONFIG_HPP
#define KLABC_CONFIG_HPP

#include <klabc/core.hpp>

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace klabc {

/// Parsed value of a TOML-style key: string, number, boolean or array.
struct ConfigValue {
  enum class Type { kString, kNumber, kBool, kArray };
  Type type = Type::kNumber;
  std::string text;  // string payload, or the literal for numbers
  double number = 0.0;
  bool boolean = false;
  std::vector<ConfigValue> items;
  std::size_t line = 0;
};

/// Subset of TOML: comments, [section] and [section.sub] headers, and
/// `key = value` with strings, numbers, booleans and (nested, possibly
/// multi-line) arrays. Keys are stored fully qualified ("kernel.kind").
/// Every lookup marks the key as used; check_unused() reports leftovers.
class ConfigDocument {
 public:
  static ConfigDocument parse(const std::string& text, const std::string& source = "<config>") {
    ConfigDocument doc;
    doc.source_ = source;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string line = strip_comment(raw);
      trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) doc.fail(line_no, "malformed section header");
        section = line.substr(1, line.size() - 2);
        trim(section);
        if (!valid_key(section, true)) doc.fail(line_no, "invalid section name '" + section + "'");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) doc.fail(line_no, "expected 'key = value'");
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      trim(key);
      trim(value);
      if (!valid_key(key, false)) doc.fail(line_no, "invalid key '" + key + "'");
      const std::size_t start_line = line_no;
      // Arrays may continue over several lines until brackets balance.
      while (bracket_depth(value) > 0) {
        if (!std::getline(in, raw)) doc.fail(start_line, "unterminated array");
        ++line_no;
        std::string more = strip_comment(raw);
        trim(more);
        value += " " + more;
      }
      const std::string full = section.empty() ? key : section + "." + key;
      if (doc.entries_.count(full)) doc.fail(start_line, "duplicate key '" + full + "'");
      std::size_t pos = 0;
      ConfigValue v = doc.parse_value(value, pos, start_line);
      skip_space(value, pos);
      if (pos != value.size()) doc.fail(start_line, "unexpected trailing text after value of '" + full + "'");
      doc.entries_.emplace(full, std::move(v));
      doc.order_.push_back(full);
    }
    return doc;
  }

  static ConfigDocument load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  const std::string& source() const { return source_; }
  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  bool has_section(const std::string& prefix) const {
    for (const auto& [k, v] : entries_)
      if (k.rfind(prefix + ".", 0) == 0) return true;
    return false;
  }

  const ConfigValue& at(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
    used_.insert(key);
    return it->second;
  }

  std::string get_string(const std::string& key) const {
    const auto& v = at(key);
    if (v.type != ConfigValue::Type::kString) type_error(key, v, "a string");
    return v.text;
  }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
  }

  double get_number(const std::string& key) const { return as_number(key, at(key)); }
  double get_number(const std::string& key, double fallback) const { return has(key) ? get_number(key) : fallback; }

  std::uint64_t get_uint(const std::string& key) const { return as_uint(key, at(key)); }
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_uint(key) : fallback;
  }

  bool get_bool(const std::string& key) const {
    const auto& v = at(key);
    if (v.type != ConfigValue::Type::kBool) type_error(key, v, "true or false");
    return v.boolean;
  }
  bool get_bool(const std::string& key, bool fallback) const { return has(key) ? get_bool(key) : fallback; }

  std::vector<double> get_numbers(const std::string& key) const {
    const auto& v = array(key);
    std::vector<double> out;
    for (const auto& item : v.items) out.push_back(as_number(key, item));
    return out;
  }

  std::vector<std::uint64_t> get_uints(const std::string& key) const {
    const auto& v = array(key);
    std::vector<std::uint64_t> out;
    for (const auto& item : v.items) out.push_back(as_uint(key, item));
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key) const {
    const auto& v = array(key);
    std::vector<std::string> out;
    for (const auto& item : v.items) {
      if (item.type != ConfigValue::Type::kString) type_error(key, item, "an array of strings");
      out.push_back(item.text);
    }
    return out;
  }

  Eigen::VectorXd get_vector(const std::string& key) const {
    const auto values = get_numbers(key);
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

  /// Array of equal-length row arrays.
  Eigen::MatrixXd get_matrix(const std::string& key) const {
    const auto& v = array(key);
    const auto rows = static_cast<Eigen::Index>(v.items.size());
    Eigen::MatrixXd out;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = v.items[static_cast<std::size_t>(r)];
      if (row.type != ConfigValue::Type::kArray) type_error(key, row, "an array of arrays");
      if (r == 0) out.resize(rows, static_cast<Eigen::Index>(row.items.size()));
      if (static_cast<Eigen::Index>(row.items.size()) != out.cols()) fail(row.line, "ragged matrix in '" + key + "'");
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = as_number(key, row.items[static_cast<std::size_t>(c)]);
    }
    return out;
  }

  std::size_t line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  /// Throws on the first key (in file order) never looked up.
  void check_unused() const {
    for (const auto& key : order_) {
      if (!used_.count(key)) fail(entries_.at(key).line, "unknown key '" + key + "'");
    }
  }

  [[noreturn]] void fail(std::size_t line, const std::string& message) const {
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + message);
  }

 private:
  std::string source_;
  std::map<std::string, ConfigValue> entries_;
  std::vector<std::string> order_;
  mutable std::set<std::string> used_;

  const ConfigValue& array(const std::string& key) const {
    const auto& v = at(key);
    if (v.type != ConfigValue::Type::kArray) type_error(key, v, "an array");
    return v;
  }

  double as_number(const std::string& key, const ConfigValue& v) const {
    if (v.type != ConfigValue::Type::kNumber) type_error(key, v, "a number");
    return v.number;
  }

  std::uint64_t as_uint(const std::string& key, const ConfigValue& v) const {
    if (v.type != ConfigValue::Type::kNumber) type_error(key, v, "a non-negative integer");
    const std::string& t = v.text;
    if (t.empty() || t.find_first_not_of("0123456789_") != std::string::npos) {
      type_error(key, v, "a non-negative integer");
    }
    std::string digits;
    for (char c : t)
      if (c != '_') digits += c;
    try {
      return std::stoull(digits);
    } catch (const std::exception&) {
      fail(v.line, "integer out of range for '" + key + "'");
    }
  }

  [[noreturn]] void type_error(const std::string& key, const ConfigValue& v, const std::string& expected) const {
    fail(v.line, "'" + key + "' must be " + expected);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static void trim(std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) {
      s.clear();
      return;
    }
    const auto b = s.find_last_not_of(" \t\r");
    s = s.substr(a, b - a + 1);
  }

  static bool valid_key(const std::string& k, bool dotted) {
    if (k.empty()) return false;
    for (char c : k) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') continue;
      if (dotted && c == '.') continue;
      return false;
    }
    return k.front() != '.' && k.back() != '.';
  }

  static int bracket_depth(const std::string& s) {
    int depth = 0;
    bool quoted = false;
    for (char c : s) {
      if (c == '"') quoted = !quoted;
      if (quoted) continue;
      if (c == '[') ++depth;
      if (c == ']') --depth;
    }
    return depth;
  }

  static void skip_space(const std::string& s, std::size_t& pos) {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }

  ConfigValue parse_value(const std::string& s, std::size_t& pos, std::size_t line) const {
    skip_space(s, pos);
    if (pos >= s.size()) fail(line, "missing value");
    ConfigValue v;
    v.line = line;
    const char c = s[pos];
    if (c == '"') {
      v.type = ConfigValue::Type::kString;
      ++pos;
      while (pos < s.size() && s[pos] != '"') {
        if (s[pos] == '\\' && pos + 1 < s.size()) {
          const char e = s[pos + 1];
          v.text += e == 'n' ? '\n' : e == 't' ? '\t' : e;
          pos += 2;
        } else {
          v.text += s[pos++];
        }
      }
      if (pos >= s.size()) fail(line, "unterminated string");
      ++pos;
      return v;
    }
    if (c == '[') {
      v.type = ConfigValue::Type::kArray;
      ++pos;
      skip_space(s, pos);
      if (pos < s.size() && s[pos] == ']') {
        ++pos;
        return v;
      }
      while (true) {
        v.items.push_back(parse_value(s, pos, line));
        skip_space(s, pos);
        if (pos >= s.size()) fail(line, "unterminated array");
        if (s[pos] == ',') {
          ++pos;
          skip_space(s, pos);
          if (pos < s.size() && s[pos] == ']') {
            ++pos;
            return v;
          }
          continue;
        }
        if (s[pos] == ']') {
          ++pos;
          return v;
        }
        fail(line, "expected ',' or ']' in array");
      }
    }
    std::size_t end = pos;
    while (end < s.size() && s[end] != ',' && s[end] != ']' && s[end] != ' ' && s[end] != '\t') ++end;
    const std::string token = s.substr(pos, end - pos);
    pos = end;
    if (token == "true" || token == "false") {
      v.type = ConfigValue::Type::kBool;
      v.boolean = token == "true";
      return v;
    }
    v.type = ConfigValue::Type::kNumber;
    v.text = token;
    std::string digits;
    for (char ch : token)
      if (ch != '_') digits += ch;
    try {
      v.number = parse_double(digits);
    } catch (const DataError&) {
      fail(line, "invalid value '" + token + "'");
    }
    if (!std::isfinite(v.number)) fail(line, "value must be finite: '" + token + "'");
    return v;
  }
};

/// TOML literal for a string.
inline std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

inline std::string toml_numbers(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out + "]";
}

inline std::string toml_vector(const Eigen::VectorXd& v) {
  return toml_numbers(std::vector<double>(v.data(), v.data() + v.size()));
}

inline std::string toml_matrix(const Eigen::MatrixXd& m) {
  std::string out = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out += r ? ", " : "";
    out += toml_vector(m.row(r).transpose());
  }
  return out + "]";
}

}  // namespace klabc

#endif  // KLABC_CONFIG_HPP
