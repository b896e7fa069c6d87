#pragma once

// Explicit little-endian encoding for the binary artifact formats, independent
// of host byte order.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "structrep/errors.hpp"

namespace structrep::binary {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void get_bytes(std::istream& in, char* dst, std::size_t n, const std::string& what) {
  if (!in.read(dst, static_cast<std::streamsize>(n))) throw IoError(what + ": truncated file");
}

inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  get_bytes(in, reinterpret_cast<char*>(b), 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in, const std::string& what) {
  unsigned char b[8];
  get_bytes(in, reinterpret_cast<char*>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline float get_f32(std::istream& in, const std::string& what) { return std::bit_cast<float>(get_u32(in, what)); }
inline double get_f64(std::istream& in, const std::string& what) { return std::bit_cast<double>(get_u64(in, what)); }

inline std::string get_string(std::istream& in, const std::string& what, std::uint32_t max_len = 1u << 20) {
  const std::uint32_t n = get_u32(in, what);
  if (n > max_len) throw IoError(what + ": implausible string length " + std::to_string(n));
  std::string s(n, '\0');
  get_bytes(in, s.data(), n, what);
  return s;
}

}  // namespace structrep::binary
