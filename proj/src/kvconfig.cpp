#include "geoclr/kvconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "geoclr/common.hpp"

namespace geoclr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_list(const std::string& raw) {
  std::string body = trim(raw);
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::vector<std::string> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(unquote(item));
  }
  return out;
}

double to_double(const std::string& text, const std::string& key) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw DataError("config key '" + key + "': not a number: " + text);
  return v;
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text, const std::string& origin) {
  KvConfig cfg;
  cfg.origin_ = origin;
  std::stringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw DataError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path);
}

const std::string* KvConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  accessed_.insert(key);
  return &it->second;
}

bool KvConfig::has(const std::string& key) const { return values_.count(key) != 0; }

double KvConfig::get_double(const std::string& key, double fallback) const {
  const std::string* v = raw(key);
  return v ? to_double(unquote(*v), key) : fallback;
}

long long KvConfig::get_int(const std::string& key, long long fallback) const {
  const std::string* v = raw(key);
  if (!v) return fallback;
  const double d = to_double(unquote(*v), key);
  const auto i = static_cast<long long>(d);
  if (static_cast<double>(i) != d) throw DataError("config key '" + key + "': not an integer: " + *v);
  return i;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = raw(key);
  if (!v) return fallback;
  const std::string s = unquote(*v);
  if (s == "true") return true;
  if (s == "false") return false;
  throw DataError("config key '" + key + "': expected true/false, got " + s);
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = raw(key);
  return v ? unquote(*v) : fallback;
}

std::vector<double> KvConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const std::string* v = raw(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) out.push_back(to_double(item, key));
  return out;
}

std::vector<std::string> KvConfig::get_strings(const std::string& key,
                                               const std::vector<std::string>& fallback) const {
  const std::string* v = raw(key);
  return v ? split_list(*v) : fallback;
}

std::vector<std::string> KvConfig::unknown_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : values_)
    if (!accessed_.count(k)) out.push_back(k);
  return out;
}

}  // namespace geoclr
