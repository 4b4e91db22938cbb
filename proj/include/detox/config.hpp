#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace detox::config {

// Flat dotted-key configuration. Files hold one `key = value` per line with
// `#` comment lines; command-line overrides replace file values key by key.
class Config {
 public:
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);

  // The no-default forms throw UsageError naming the missing key. Typed
  // getters throw UsageError naming the key when the value does not parse.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_real(const std::string& key) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // Sorted `key = value` lines — the reproducible snapshot format.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> values_;
};

// Errors: unreadable file -> DataError; malformed line, bad key syntax, or
// duplicate key -> UsageError with the line number.
Config parse_file(const std::filesystem::path& path);

// One "key=value" override (the CLI's --set). Errors: no '=' or empty key.
void apply_override(Config& cfg, const std::string& assignment);

// Rejects keys outside the allowed set, naming the first offender.
void require_known_keys(const Config& cfg,
                        const std::set<std::string>& allowed);

}  // namespace detox::config
