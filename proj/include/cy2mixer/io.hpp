#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cy2mixer/error.hpp"
#include "cy2mixer/matrix.hpp"

/// Little-endian binary containers:
///   CY2T  tensor:  "CY2T", u32 rank, u32 dims[rank], f64 payload
///   CY2M  matrix:  "CY2M", u32 N, f32 payload (N x N)
///   CY2S  signals: "CY2S", u32 T, u32 N, u32 C, u64 start, u32 interval, f32 payload
namespace cy2mixer::io {

namespace detail {

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFFU);
  out.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& in, const std::string& what) {
  std::array<unsigned char, sizeof(U)> buf{};
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) fail(errc::parse_error, what + ": truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
  return v;
}

inline void put_f32(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f32(std::istream& in, const std::string& what) {
  return static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, what)));
}
inline double get_f64(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in, what));
}

inline void expect_magic(std::istream& in, std::string_view magic, const std::string& what) {
  std::array<char, 4> buf{};
  if (!in.read(buf.data(), 4) || std::string_view(buf.data(), 4) != magic) {
    fail(errc::parse_error, what + ": bad magic, expected " + std::string(magic));
  }
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot write " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open " + path);
  return in;
}

}  // namespace detail

struct RawTensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

inline void write_cy2t(std::ostream& out, std::span<const std::size_t> shape, std::span<const double> data) {
  out.write("CY2T", 4);
  detail::put_le(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) detail::put_le(out, static_cast<std::uint32_t>(d));
  for (double v : data) detail::put_f64(out, v);
}

inline RawTensor read_cy2t(std::istream& in, const std::string& what = "CY2T") {
  detail::expect_magic(in, "CY2T", what);
  RawTensor t;
  const auto rank = detail::get_le<std::uint32_t>(in, what);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.shape.push_back(detail::get_le<std::uint32_t>(in, what));
    count *= t.shape.back();
  }
  t.data.resize(count);
  for (auto& v : t.data) v = detail::get_f64(in, what);
  return t;
}

inline void write_cy2m(const std::string& path, const Matrix& m) {
  if (m.rows != m.cols) fail(errc::shape_mismatch, "CY2M stores square matrices only");
  auto out = detail::open_out(path);
  out.write("CY2M", 4);
  detail::put_le(out, static_cast<std::uint32_t>(m.rows));
  for (double v : m.values) detail::put_f32(out, v);
}

inline Matrix read_cy2m(const std::string& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "CY2M", path);
  const auto n = detail::get_le<std::uint32_t>(in, path);
  Matrix m(n, n);
  for (auto& v : m.values) v = detail::get_f32(in, path);
  return m;
}

}  // namespace cy2mixer::io
