#ifndef FEDSIM_CONFIG_HPP_
#define FEDSIM_CONFIG_HPP_

#include <map>
#include <set>
#include <string>
#include <vector>

namespace fedsim {

// Flat key-value configuration document with [section] headers. Keys are
// addressed as "section.key". Every key must be consumed by a getter;
// leftovers are reported as unknown keys (fail fast).
class ConfigDoc {
 public:
  static ConfigDoc parse_file(const std::string& path);
  static ConfigDoc parse_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::vector<std::size_t> get_dims(const std::string& key,
                                    std::vector<std::size_t> def) const;

  // Throws ConfigError naming every key no getter asked for.
  void ensure_fully_consumed() const;

  void set(const std::string& key, const std::string& value);

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace fedsim

#endif  // FEDSIM_CONFIG_HPP_
