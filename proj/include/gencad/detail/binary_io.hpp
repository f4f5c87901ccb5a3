#pragma once

// Little-endian primitives shared by the binary sidecar formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "gencad/error.hpp"

namespace gencad::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with host byte order, which must be little-endian");

template <class T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, std::string_view what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw ParseError("truncated input while reading " + std::string(what));
  }
  return value;
}

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(magic.size()));
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
    throw ParseError("bad magic: expected \"" + std::string(magic) + "\"");
  }
}

inline void write_string(std::ostream& out, std::string_view s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::string_view what, std::size_t max_len = 1u << 24) {
  const auto n = read_pod<std::uint32_t>(in, what);
  if (n > max_len) throw ParseError("implausible string length while reading " + std::string(what));
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw ParseError("truncated input while reading " + std::string(what));
  }
  return s;
}

}  // namespace gencad::detail
