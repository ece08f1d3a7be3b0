#include "rsgd/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rsgd/data.hpp"

namespace rsgd {
namespace {

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("config key '" + key + "': '" + text + "' is not a number");
  }
  return v;
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = strip(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = strip(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + " has no '='");
    }
    const std::string key = strip(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + " has an empty key");
    c.values_[key] = strip(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  const std::string v = it == values_.end() ? fallback : it->second;
  resolved_[key] = v;
  return v;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    resolved_[key] = format_double(fallback);
    return fallback;
  }
  const double v = parse_double(key, it->second);
  resolved_[key] = it->second;
  return v;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    resolved_[key] = std::to_string(fallback);
    return fallback;
  }
  std::int64_t v = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
  }
  resolved_[key] = s;
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    resolved_[key] = fallback ? "true" : "false";
    return fallback;
  }
  const auto& s = it->second;
  bool v = false;
  if (s == "true" || s == "1" || s == "yes") {
    v = true;
  } else if (s == "false" || s == "0" || s == "no") {
    v = false;
  } else {
    throw ConfigError("config key '" + key + "': '" + s + "' is not a boolean");
  }
  resolved_[key] = v ? "true" : "false";
  return v;
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  auto it = values_.find(key);
  std::vector<double> out;
  if (it == values_.end()) {
    out = fallback;
  } else {
    for (const auto& item : split_list(it->second)) out.push_back(parse_double(key, item));
  }
  std::string text;
  for (std::size_t i = 0; i < out.size(); ++i) text += (i ? "," : "") + format_double(out[i]);
  resolved_[key] = text;
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
  auto it = values_.find(key);
  const std::vector<std::string> out = it == values_.end() ? fallback : split_list(it->second);
  std::string text;
  for (std::size_t i = 0; i < out.size(); ++i) text += (i ? "," : "") + out[i];
  resolved_[key] = text;
  return out;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!resolved_.count(k)) out.push_back(k);
  }
  return out;
}

std::string Config::resolved() const {
  std::string out;
  for (const auto& [k, v] : resolved_) out += k + "=" + v + "\n";
  return out;
}

}  // namespace rsgd
