#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "pffl/errors.hpp"
#include "pffl/image.hpp"

namespace pffl {

// Binary tensor container:
//   bytes 0..3   magic "PFT1"
//   byte  4      rank, always 3
//   bytes 5..16  three u32 little-endian dims: channels, height, width
//   payload      f32 little-endian, row-major within each channel, channels
//                outermost
namespace pft1 {

inline constexpr char kMagic[4] = {'P', 'F', 'T', '1'};
inline constexpr std::size_t kHeaderSize = 17;
inline constexpr std::uint64_t kMaxElements = 1ull << 26;

static_assert(std::numeric_limits<float>::is_iec559, "requires IEEE-754 float");

inline void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace pft1

inline std::string tensor_to_bytes(const Image& img) {
  img.validate();
  std::string out;
  out.reserve(pft1::kHeaderSize + img.size() * 4);
  out.append(pft1::kMagic, 4);
  out.push_back(3);
  pft1::put_u32le(out, static_cast<std::uint32_t>(img.channels));
  pft1::put_u32le(out, static_cast<std::uint32_t>(img.height));
  pft1::put_u32le(out, static_cast<std::uint32_t>(img.width));
  for (float v : img.data) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    pft1::put_u32le(out, bits);
  }
  return out;
}

inline Image tensor_from_bytes(const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  if (n < pft1::kHeaderSize) throw IoError("tensor truncated: no room for header");
  if (std::memcmp(p, pft1::kMagic, 4) != 0) throw BadMagicError("bad tensor magic");
  if (p[4] != 3)
    throw BadMagicError("unsupported tensor rank " + std::to_string(p[4]));
  const std::uint32_t c = pft1::get_u32le(p + 5);
  const std::uint32_t h = pft1::get_u32le(p + 9);
  const std::uint32_t w = pft1::get_u32le(p + 13);
  if (c != 1 && c != 3)
    throw DimensionOverflowError("tensor channels must be 1 or 3, got " +
                                 std::to_string(c));
  if (h == 0 || w == 0) throw DimensionOverflowError("tensor dims must be positive");
  const std::uint64_t elems = static_cast<std::uint64_t>(c) * h * w;
  if (h > (1u << 20) || w > (1u << 20) || elems > pft1::kMaxElements)
    throw DimensionOverflowError("tensor dims too large: " + std::to_string(c) + "x" +
                                 std::to_string(h) + "x" + std::to_string(w));
  const std::size_t want = pft1::kHeaderSize + static_cast<std::size_t>(elems) * 4;
  if (n < want) throw IoError("tensor truncated: payload shorter than header claims");
  if (n > want) throw IoError("tensor has trailing bytes past the payload");
  Image img(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  const unsigned char* q = p + pft1::kHeaderSize;
  for (std::size_t k = 0; k < img.size(); ++k, q += 4) {
    const std::uint32_t bits = pft1::get_u32le(q);
    float v;
    std::memcpy(&v, &bits, 4);
    img.data[k] = v;
  }
  img.validate();
  return img;
}

inline Image tensor_from_bytes(const std::string& s) {
  return tensor_from_bytes(s.data(), s.size());
}

inline void write_tensor(const Image& img, const std::string& path) {
  const std::string bytes = tensor_to_bytes(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write: " + path);
}

inline Image read_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    if (!std::filesystem::exists(path)) throw FileNotFoundError("no such file: " + path);
    throw IoError("cannot open: " + path);
  }
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed: " + path);
  return tensor_from_bytes(bytes);
}

}  // namespace pffl
