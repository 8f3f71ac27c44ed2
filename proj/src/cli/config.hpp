#pragma once

// Resolved run configuration. Every setting has a built-in default; a
// `key = value` file and then command-line flags override it. The source of
// each value is kept so it can be logged.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace phaseseg::cli {

enum class Source { kDefault, kFile, kManifest, kFlag };
const char* source_name(Source s);

struct Setting {
  std::string value;
  Source source = Source::kDefault;
};

class RunConfig {
 public:
  /// All known keys at their defaults.
  RunConfig();

  static const std::vector<std::string>& keys();
  static bool known(const std::string& key);

  /// Throws ValidationError for unknown keys.
  void set(const std::string& key, const std::string& value, Source source);
  /// Applies `key = value` lines; '#' starts a comment. ParseError carries
  /// the line number.
  void load_file(const std::filesystem::path& path, Source source = Source::kFile);

  const Setting& at(const std::string& key) const;
  const std::string& str(const std::string& key) const { return at(key).value; }
  std::int64_t integer(const std::string& key) const;
  std::uint64_t unsigned_integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  bool empty(const std::string& key) const { return at(key).value.empty(); }

  const std::map<std::string, Setting>& settings() const { return settings_; }

 private:
  std::map<std::string, Setting> settings_;
};

}  // namespace phaseseg::cli
