#include "cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "phaseseg/errors.hpp"

namespace phaseseg::cli {

namespace {

struct Default {
  const char* key;
  const char* value;
};

// Keys shared by every command; a command reads the ones it needs.
constexpr Default kDefaults[] = {
    {"seed", "0"},
    {"precision", "32"},
    // synthetic data
    {"profile", "default"},
    {"train_count", "62"},
    {"val_count", "8"},
    {"test_count", "11"},
    {"dim", ""},
    {"noise_sigma", ""},
    {"label_noise_rate", ""},
    {"boundary_blur", ""},
    {"include_all_phases", "true"},
    // model
    {"classes", "4"},
    {"channels", "256"},
    {"stages", "4"},
    {"layers", "11"},
    {"refinement_layers", "10"},
    {"kernel_size", "3"},
    {"fusion", "sum"},
    // training
    {"epochs", "100"},
    {"learning_rate", "1e-5"},
    {"batch_size", "1"},
    {"patience", "3"},
    {"weight_decay", "0.01"},
    {"sampling", "uniform"},
    {"alpha", "uniform"},
    {"loss", "focal"},
    {"gamma", "2"},
    {"lambda", "0.15"},
    {"smoothing_clamp", ""},
    // post-processing and evaluation
    {"post", "none"},
    {"threshold", "30"},
    {"retroactive", "true"},
    {"allow_skip", "false"},
    {"split", "test"},
    // notes
    {"fps", "1"},
    {"frames", ""},
    {"lexicon", ""},
    {"expanded", "false"},
    // paths
    {"ssl_features", ""},
    {"model", ""},
    {"notes", ""},
    {"labels", ""},
    {"pred", ""},
    {"gt", ""},
    {"out", "."},
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ValidationError("config key '" + key + "': '" + value + "' is not " + want);
}

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

}  // namespace

const char* source_name(Source s) {
  switch (s) {
    case Source::kDefault: return "default";
    case Source::kFile: return "config";
    case Source::kManifest: return "manifest";
    case Source::kFlag: return "flag";
  }
  return "unknown";
}

RunConfig::RunConfig() {
  for (const auto& d : kDefaults) settings_[d.key] = Setting{d.value, Source::kDefault};
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& d : kDefaults) out.emplace_back(d.key);
    return out;
  }();
  return k;
}

bool RunConfig::known(const std::string& key) {
  const auto& k = keys();
  return std::find(k.begin(), k.end(), key) != k.end();
}

void RunConfig::set(const std::string& key, const std::string& value, Source source) {
  if (!known(key)) throw ValidationError("unknown config key '" + key + "'");
  settings_[key] = Setting{value, source};
}

void RunConfig::load_file(const std::filesystem::path& path, Source source) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string text = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) +
                           ": expected 'key = value'",
                       line_no);
    }
    const std::string key = trim(text.substr(0, eq));
    if (!known(key)) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": unknown key '" +
                           key + "'",
                       line_no);
    }
    set(key, trim(text.substr(eq + 1)), source);
  }
}

const Setting& RunConfig::at(const std::string& key) const {
  const auto it = settings_.find(key);
  if (it == settings_.end()) throw ValidationError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::integer(const std::string& key) const {
  return parse_int<std::int64_t>(key, str(key));
}

std::uint64_t RunConfig::unsigned_integer(const std::string& key) const {
  return parse_int<std::uint64_t>(key, str(key));
}

double RunConfig::real(const std::string& key) const {
  const std::string& v = str(key);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool RunConfig::boolean(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

}  // namespace phaseseg::cli
