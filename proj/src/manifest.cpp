#include "palsim/manifest.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "palsim/common.hpp"
#include "palsim/field_io.hpp"

namespace palsim {

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file_bytes(path)); }

nlohmann::json manifest_json(const RunManifest& m, const std::filesystem::path& out_dir) {
  auto entries = [](std::vector<std::filesystem::path> paths, const std::filesystem::path* base) {
    std::sort(paths.begin(), paths.end());
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : paths) {
      const std::string shown = base ? std::filesystem::relative(p, *base).generic_string() : p.generic_string();
      arr.push_back({{"path", shown}, {"sha256", sha256_file(p)}});
    }
    return arr;
  };
  nlohmann::json j = {{"tool", "palsim"},
                      {"version", kToolVersion},
                      {"command", m.command},
                      {"seed", m.seed},
                      {"inputs", entries(m.inputs, nullptr)},
                      {"outputs", entries(m.outputs, &out_dir)}};
  if (m.config) j["config"] = *m.config;
  return j;
}

std::filesystem::path write_manifest(const RunManifest& m, const std::filesystem::path& out_dir) {
  const auto path = out_dir / "run-manifest.json";
  write_text_atomic(path, manifest_json(m, out_dir).dump(2) + "\n");
  return path;
}

}  // namespace palsim
