#pragma once

// run_manifest.json: what was run, with which resolved settings, on which
// inputs (by SHA-256), producing which files.

#include <filesystem>
#include <string>
#include <vector>

#include "cli/config.hpp"

namespace phaseseg::cli {

struct FileRecord {
  std::string role;
  std::string path;
  std::string sha256;  ///< empty for artifacts
};

struct RunManifest {
  std::string command;
  RunConfig config;
  std::uint64_t seed = 0;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> artifacts;
  std::string started_utc;
  double wall_clock_seconds = 0.0;
  int exit_code = 0;
};

/// Lower-case hex digest of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Digest of every regular file under `dir` (relative path and contents, in
/// sorted path order). Plain files hash as sha256_file.
std::string sha256_tree(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

std::string utc_now();

}  // namespace phaseseg::cli
