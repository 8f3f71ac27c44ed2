#include "cli/manifest.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "phaseseg/errors.hpp"

namespace phaseseg::cli {

namespace fs = std::filesystem;

namespace {

using Ctx = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>;

Ctx new_ctx() {
  Ctx ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256: digest initialisation failed");
  }
  return ctx;
}

void feed_file(EVP_MD_CTX* ctx, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for hashing");
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    const auto n = in.gcount();
    if (n > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(n));
  }
  if (in.bad()) throw IoError("failed reading " + path.string());
}

std::string finish(EVP_MD_CTX* ctx) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, md, &len) != 1) throw IoError("sha256: digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

nlohmann::json files_json(const std::vector<FileRecord>& files, bool with_hash) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : files) {
    nlohmann::json j = {{"role", f.role}, {"path", f.path}};
    if (with_hash) j["sha256"] = f.sha256;
    arr.push_back(j);
  }
  return arr;
}

std::vector<FileRecord> files_from(const nlohmann::json& arr) {
  std::vector<FileRecord> out;
  for (const auto& j : arr) {
    out.push_back({j.at("role").get<std::string>(), j.at("path").get<std::string>(),
                   j.value("sha256", std::string())});
  }
  return out;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  auto ctx = new_ctx();
  feed_file(ctx.get(), path);
  return finish(ctx.get());
}

std::string sha256_tree(const fs::path& path) {
  if (!fs::is_directory(path)) return sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  auto ctx = new_ctx();
  for (const auto& f : files) {
    const std::string rel = fs::relative(f, path).generic_string();
    EVP_DigestUpdate(ctx.get(), rel.data(), rel.size() + 1);  // include the NUL separator
    feed_file(ctx.get(), f);
  }
  return finish(ctx.get());
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  nlohmann::json config = nlohmann::json::object();
  for (const auto& [key, s] : m.config.settings()) {
    config[key] = {{"value", s.value}, {"source", source_name(s.source)}};
  }
  const nlohmann::json j = {{"command", m.command},
                            {"seed", m.seed},
                            {"config", config},
                            {"inputs", files_json(m.inputs, true)},
                            {"artifacts", files_json(m.artifacts, false)},
                            {"started_utc", m.started_utc},
                            {"wall_clock_seconds", m.wall_clock_seconds},
                            {"exit_code", m.exit_code}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

Source source_from_name(const std::string& name) {
  for (Source s : {Source::kDefault, Source::kFile, Source::kManifest, Source::kFlag}) {
    if (name == source_name(s)) return s;
  }
  throw ValidationError("unknown config source '" + name + "' in manifest");
}

}  // namespace

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  RunManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [key, s] : j.at("config").items()) {
      m.config.set(key, s.at("value").get<std::string>(),
                   source_from_name(s.value("source", std::string("manifest"))));
    }
    m.inputs = files_from(j.at("inputs"));
    m.artifacts = files_from(j.at("artifacts"));
    m.started_utc = j.value("started_utc", std::string());
    m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    m.exit_code = j.value("exit_code", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path.string() + ": " + e.what(), 0);
  }
  return m;
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace phaseseg::cli
