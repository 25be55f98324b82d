#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dac {

// Flat key=value run configuration.  Every key is declared in the registry
// with a type and default; unknown keys and unparseable values are rejected
// at set() time, so any config that reaches a command is fully validated.
class RunConfig {
 public:
  enum class Type { string_t, int_t, double_t, bool_t, u64_t, int_list_t };

  struct KeySpec {
    Type type;
    std::string default_value;
    std::string help;
  };

  RunConfig();

  static const std::map<std::string, KeySpec>& registry();

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  // parses `key=value` lines, '#' comments, blank lines
  void load_file(const std::string& path);
  void load_text(const std::string& text);
  // DAC_<UPPERCASE KEY> environment variables override current values
  void apply_env_overrides();

  std::string get_string(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  // keys whose value must be non-empty for the given command
  void require_nonempty(const std::string& key) const;

  // normalized `key=value` lines, sorted by key
  std::string snapshot() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const KeySpec& spec_of(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace dac
