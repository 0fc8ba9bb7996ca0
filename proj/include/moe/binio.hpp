#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "moe/error.hpp"

namespace moe::binio {

// All file formats are little-endian regardless of host order.

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_i8(std::ostream& out, std::int8_t v) {
  out.write(reinterpret_cast<const char*>(&v), 1);
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  put_u64(out, bits);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("short read: " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& in, const std::string& what) {
  const std::uint64_t lo = get_u32(in, what);
  const std::uint64_t hi = get_u32(in, what);
  return (hi << 32) | lo;
}

inline std::int8_t get_i8(std::istream& in, const std::string& what) {
  char c;
  if (!in.read(&c, 1)) throw IoError("short read: " + what);
  return static_cast<std::int8_t>(c);
}

inline double get_f64(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(get_u64(in, what));
}

inline void put_magic(std::ostream& out, const char (&magic)[6]) {
  out.write(magic, 5);
}

inline void expect_magic(std::istream& in, const char (&magic)[6], const std::string& what) {
  char buf[5];
  if (!in.read(buf, 5) || std::memcmp(buf, magic, 5) != 0)
    throw IoError("bad magic, expected " + std::string(magic, 5) + " in " + what);
}

}  // namespace moe::binio
