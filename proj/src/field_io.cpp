#include "palsim/field_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>

namespace palsim {

namespace {

constexpr std::string_view kMagic = "PALDSTF1";

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes[offset + i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

std::vector<std::uint8_t> encode_field(const DistortionField& field) {
  field.validate();
  if (field.width_px > UINT32_MAX || field.height_px > UINT32_MAX)
    throw ValidationError("field dimensions exceed u32", "width_px");
  std::vector<std::uint8_t> out;
  out.reserve(kFieldHeaderBytes + field.dx.size() * 8);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_le(out, static_cast<std::uint32_t>(field.width_px));
  put_le(out, static_cast<std::uint32_t>(field.height_px));
  put_le(out, field.domain_half_extent);
  for (std::size_t i = 0; i < field.dx.size(); ++i) {
    const float fx = static_cast<float>(field.dx[i]);
    const float fy = static_cast<float>(field.dy[i]);
    if (!std::isfinite(fx) || !std::isfinite(fy))
      throw ValidationError("offset overflows f32 at cell " + std::to_string(i), "dx");
    put_le(out, fx);
    put_le(out, fy);
  }
  return out;
}

DistortionField decode_field(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() ||
      std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw FormatError("bad magic: expected PALDSTF1", 0);
  if (bytes.size() < kFieldHeaderBytes)
    throw FormatError("truncated header", bytes.size());
  const auto width = get_le<std::uint32_t>(bytes, 8);
  const auto height = get_le<std::uint32_t>(bytes, 12);
  const auto extent = get_le<double>(bytes, 16);
  if (width == 0) throw FormatError("width must be positive", 8);
  if (height == 0) throw FormatError("height must be positive", 12);
  if (!std::isfinite(extent) || !(extent > 0.0))
    throw FormatError("domain_half_extent must be finite and > 0", 16);
  const std::uint64_t cells = static_cast<std::uint64_t>(width) * height;
  const std::uint64_t expected = kFieldHeaderBytes + cells * 8;
  if (bytes.size() < expected) throw FormatError("truncated payload", bytes.size());
  if (bytes.size() > expected) throw FormatError("trailing bytes after payload", expected);

  DistortionField field(width, height, extent);
  std::size_t offset = kFieldHeaderBytes;
  for (std::size_t i = 0; i < cells; ++i) {
    const float fx = get_le<float>(bytes, offset);
    if (!std::isfinite(fx)) throw FormatError("non-finite dx", offset);
    const float fy = get_le<float>(bytes, offset + 4);
    if (!std::isfinite(fy)) throw FormatError("non-finite dy", offset + 4);
    field.dx[i] = fx;
    field.dy[i] = fy;
    offset += 8;
  }
  return field;
}

void write_field_file(const DistortionField& field, const std::filesystem::path& path) {
  write_file_atomic(path, encode_field(field));
}

DistortionField read_field_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_field(bytes);
}

std::vector<std::uint8_t> encode_pfm(const Grid& grid) {
  std::ostringstream header;
  header << "Pf\n" << grid.width << ' ' << grid.height << "\n-1.0\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.reserve(out.size() + grid.size() * 4);
  for (std::size_t r = grid.height; r-- > 0;) {
    for (std::size_t c = 0; c < grid.width; ++c) put_le(out, static_cast<float>(grid.at(c, r)));
  }
  return out;
}

Grid decode_pfm(std::span<const std::uint8_t> bytes) {
  // Header: three whitespace-terminated tokens after the type line.
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) throw FormatError("truncated PFM header", start);
    return std::string(reinterpret_cast<const char*>(bytes.data()) + start, pos - start);
  };
  if (token() != "Pf") throw FormatError("only greyscale 'Pf' PFM is supported", 0);
  std::size_t w = 0, h = 0;
  double scale = 0.0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    scale = std::stod(token());
  } catch (const std::logic_error&) {
    throw FormatError("malformed PFM header", pos);
  }
  if (scale >= 0.0) throw FormatError("big-endian PFM is not supported", pos);
  ++pos;  // single whitespace byte before raster
  if (bytes.size() < pos + w * h * 4) throw FormatError("truncated PFM raster", bytes.size());
  Grid grid(w, h);
  for (std::size_t r = h; r-- > 0;) {
    for (std::size_t c = 0; c < w; ++c) {
      grid.at(c, r) = get_le<float>(bytes, pos);
      pos += 4;
    }
  }
  return grid;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace palsim
