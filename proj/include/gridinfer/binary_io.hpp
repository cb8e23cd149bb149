#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "gridinfer/errors.hpp"

namespace gridinfer {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("unexpected end of file");
  return value;
}

inline void write_bytes(std::ostream& out, const void* data, std::size_t len) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
}

inline void read_bytes(std::istream& in, void* data, std::size_t len) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(len));
  if (!in) throw IoError("unexpected end of file");
}

inline void write_string_u32(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

inline std::string read_string_u32(std::istream& in, std::uint32_t max_len = 1u << 28) {
  auto n = read_le<std::uint32_t>(in);
  if (n > max_len) throw IoError("length prefix out of range");
  std::string s(n, '\0');
  if (n > 0) read_bytes(in, s.data(), n);
  return s;
}

}  // namespace gridinfer
