#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "palsim/common.hpp"
#include "palsim/distortion_field.hpp"

namespace palsim {

// PALDSTF1 layout (all little-endian):
//   [0, 8)    magic "PALDSTF1"
//   [8, 12)   u32 width
//   [12, 16)  u32 height
//   [16, 24)  f64 domain_half_extent
//   [24, ...) width*height pairs of f32 (dx, dy), row-major, top row first
inline constexpr std::size_t kFieldHeaderBytes = 24;

/// Offsets are narrowed to f32.
std::vector<std::uint8_t> encode_field(const DistortionField& field);

/// Throws FormatError whose location() is the byte offset of the problem.
DistortionField decode_field(std::span<const std::uint8_t> bytes);

void write_field_file(const DistortionField& field, const std::filesystem::path& path);
DistortionField read_field_file(const std::filesystem::path& path);

/// Greyscale PFM ("Pf", scale -1.0 = little-endian). PFM stores the bottom
/// row first; Grid row 0 is the top row.
std::vector<std::uint8_t> encode_pfm(const Grid& grid);
Grid decode_pfm(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace palsim
