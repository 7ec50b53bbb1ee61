#include "fedsim/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config file not found: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str());
}

ConfigDoc ConfigDoc::parse_string(const std::string& text) {
  ConfigDoc doc;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": empty section name");
      }
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": key outside any [section]");
    }
    std::string key = section + "." + trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (doc.values_.count(key)) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": duplicate key " + key);
    }
    doc.values_[key] = value;
  }
  return doc;
}

bool ConfigDoc::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string ConfigDoc::get_str(const std::string& key,
                               const std::string& def) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

double ConfigDoc::get_double(const std::string& key, double def) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  char* end = nullptr;
  double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0') {
    throw ConfigError("config key " + key + ": '" + it->second +
                      "' is not a number");
  }
  return v;
}

std::uint64_t ConfigDoc::get_u64(const std::string& key,
                                 std::uint64_t def) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  char* end = nullptr;
  unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0') {
    throw ConfigError("config key " + key + ": '" + it->second +
                      "' is not a non-negative integer");
  }
  return v;
}

bool ConfigDoc::get_bool(const std::string& key, bool def) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  const std::string& v = it->second;
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + ": '" + v +
                    "' is not a boolean (on/off)");
}

std::vector<std::size_t> ConfigDoc::get_dims(
    const std::string& key, std::vector<std::size_t> def) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  std::vector<std::size_t> out;
  std::stringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    char* end = nullptr;
    unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0' || v == 0) {
      throw ConfigError("config key " + key + ": '" + tok +
                        "' is not a positive integer");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void ConfigDoc::ensure_fully_consumed() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key)) {
      if (!unknown.empty()) unknown += ", ";
      unknown += key;
    }
  }
  if (!unknown.empty()) {
    throw ConfigError("unknown config keys: " + unknown);
  }
}

void ConfigDoc::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

}  // namespace fedsim
