#include "detox/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "detox/errors.hpp"

namespace detox::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_key(const std::string& key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  for (const char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw UsageError("config key `" + key + "`: expected " + expected +
                   ", got `" + value + "`");
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  if (!valid_key(key))
    throw UsageError("config key `" + key +
                     "` is malformed (lowercase dotted identifiers only)");
  values_[key] = value;
}

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    throw UsageError("missing config key `" + key + "`");
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const auto raw = get_string(key);
  try {
    std::size_t used = 0;
    const auto v = std::stoll(raw, &used);
    if (used != raw.size()) bad_value(key, raw, "an integer");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, raw, "an integer");
  }
}

std::int64_t Config::get_int(const std::string& key,
                             std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key,
                              std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const auto raw = get_string(key);
  try {
    std::size_t used = 0;
    const auto v = std::stoull(raw, &used);
    if (used != raw.size() || raw.front() == '-')
      bad_value(key, raw, "a non-negative integer");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, raw, "a non-negative integer");
  }
}

double Config::get_real(const std::string& key) const {
  const auto raw = get_string(key);
  try {
    std::size_t used = 0;
    const auto v = std::stod(raw, &used);
    if (used != raw.size()) bad_value(key, raw, "a number");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, raw, "a number");
  }
}

double Config::get_real(const std::string& key, double fallback) const {
  return has(key) ? get_real(key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto raw = get_string(key);
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off")
    return false;
  bad_value(key, raw, "a boolean (true/false)");
}

std::string Config::canonical() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

Config parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file " + path.string());

  Config cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto at = [&] { return path.string() + ":" + std::to_string(line_no); };
    const auto stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw UsageError("config " + at() + ": expected `key = value`");
    const auto key = trim(stripped.substr(0, eq));
    const auto value = trim(stripped.substr(eq + 1));
    if (!valid_key(key))
      throw UsageError("config " + at() + ": malformed key `" + key + "`");
    if (cfg.has(key))
      throw UsageError("config " + at() + ": duplicate key `" + key + "`");
    cfg.set(key, value);
  }
  return cfg;
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("override `" + assignment +
                     "` must look like key=value");
  cfg.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void require_known_keys(const Config& cfg,
                        const std::set<std::string>& allowed) {
  for (const auto& [key, value] : cfg.values()) {
    (void)value;
    if (!allowed.count(key))
      throw UsageError("unknown config key `" + key + "`");
  }
}

}  // namespace detox::config
