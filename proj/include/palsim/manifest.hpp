#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace palsim {

inline constexpr const char* kToolVersion = "0.1.0";

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Provenance record written next to every command's outputs. Output paths
/// are stored relative to the output directory so reruns into different
/// directories compare equal.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  const nlohmann::json* config = nullptr;  // optional, not owned
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

nlohmann::json manifest_json(const RunManifest& m, const std::filesystem::path& out_dir);
/// Writes `<out_dir>/run-manifest.json` atomically and returns the path.
std::filesystem::path write_manifest(const RunManifest& m, const std::filesystem::path& out_dir);

}  // namespace palsim
