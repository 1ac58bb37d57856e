#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace geoclr {

/// Minimal TOML-like key/value file:
///
///   # comment
///   [section]
///   key = 1.5
///   name = "kelp"
///   values = [0.0, 1.0, 5.0]
///
/// Keys inside a section are addressed as "section.key". Values are kept as
/// raw text and converted on access; every accessed key is remembered so that
/// callers can reject typos via unknown_keys().
class KvConfig {
 public:
  static KvConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KvConfig load(const std::string& path);

  bool has(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  /// Keys present in the file that were never read.
  std::vector<std::string> unknown_keys() const;

 private:
  const std::string* raw(const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> accessed_;
};

}  // namespace geoclr
