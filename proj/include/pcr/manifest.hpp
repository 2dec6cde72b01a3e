#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace pcr {

inline constexpr const char* kToolVersion = "0.1.0";

/// Record of one CLI run: command line, config snapshot, input hashes and
/// output paths. Written atomically (temp file + rename) at run end.
struct RunManifest {
  std::string command;
  std::string config_snapshot;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, content hash
  std::vector<std::string> outputs;
  double wall_time_s = 0.0;
};

/// FNV-1a 64 over the file bytes, hex encoded.
std::string hash_file(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace pcr
