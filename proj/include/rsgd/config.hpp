#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rsgd/types.hpp"

namespace rsgd {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Flat key=value configuration with dotted section prefixes
/// (mechanism.kind=hmcar). Lines starting with '#' are comments. Every
/// lookup records the value used, defaults included, so `resolved()` lists
/// the complete effective configuration.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  /// Keys present in the file but never read.
  std::vector<std::string> unused_keys() const;

  /// Sorted key=value lines of every value read.
  std::string resolved() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> resolved_;
};

std::vector<std::string> split_list(const std::string& text);

}  // namespace rsgd
