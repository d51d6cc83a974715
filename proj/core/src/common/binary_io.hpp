#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

// Little-endian primitives shared by the tensor and checkpoint containers.
namespace layerens::detail {

template <typename U>
void write_le(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename U>
U read_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw std::runtime_error(std::string("truncated file while reading ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

inline void write_f64(std::ostream& out, double v) { write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }

inline double read_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(read_le<std::uint64_t>(in, what));
}

inline void expect_magic(std::istream& in, const std::string& magic, const std::string& source) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw std::runtime_error(source + ": bad magic, expected " + magic.substr(0, magic.size() - 1));
  }
}

}  // namespace layerens::detail
