#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace igmn::io {

// Little-endian binary primitives shared by the bank snapshot, the feature
// container and checkpoints. Raw doubles round-trip bit-exactly.

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_i64(std::ostream& os, std::int64_t v) {
  write_u64(os, static_cast<std::uint64_t>(v));
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void write_f64s(std::ostream& os, const std::vector<double>& v) {
  for (double x : v) write_f64(os, x);
}

inline void read_exact(std::istream& is, char* out, std::size_t n, const char* what) {
  is.read(out, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw std::runtime_error(std::string("unexpected end of file while reading ") + what);
}

inline std::uint32_t read_u32(std::istream& is, const char* what = "u32") {
  unsigned char b[4];
  read_exact(is, reinterpret_cast<char*>(b), 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* what = "u64") {
  unsigned char b[8];
  read_exact(is, reinterpret_cast<char*>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::int64_t read_i64(std::istream& is, const char* what = "i64") {
  return static_cast<std::int64_t>(read_u64(is, what));
}

inline double read_f64(std::istream& is, const char* what = "f64") {
  const std::uint64_t bits = read_u64(is, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline std::string read_string(std::istream& is, const char* what = "string") {
  const std::uint32_t n = read_u32(is, what);
  std::string s(n, '\0');
  if (n) read_exact(is, s.data(), n, what);
  return s;
}

inline std::vector<double> read_f64s(std::istream& is, std::size_t n, const char* what = "f64s") {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = read_f64(is, what);
  return v;
}

inline void expect_magic(std::istream& is, const char* magic, const char* what) {
  const std::size_t n = std::strlen(magic);
  std::string got(n, '\0');
  is.read(got.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n || got != magic)
    throw std::runtime_error(std::string(what) + ": bad or missing file header");
}

}  // namespace igmn::io
