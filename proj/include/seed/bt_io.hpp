#pragma once

// ".bt" binary tensor files:
//   "BTEN" | version 0x01 | dtype 0x01 (float64) | ndim u8 | ndim x u64 LE dims | LE payload

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "seed/tensor.hpp"

namespace seed::bt {

inline constexpr std::array<char, 4> kMagic{'B', 'T', 'E', 'N'};
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::uint8_t kFloat64 = 0x01;

namespace detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Tensor& t) {
  if (t.rank() > 255) throw ContractError("bt: rank exceeds 255");
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  out.push_back(kFloat64);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) detail::put_u64(out, d);
  out.reserve(out.size() + 8 * t.numel());
  for (double v : t.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Tensor decode(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>") {
  auto fail = [&](const std::string& why) { return FormatError("bt: " + origin + ": " + why); };
  if (bytes.size() < 7 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) throw fail("bad magic");
  if (bytes[4] != kVersion) throw fail("unsupported version " + std::to_string(bytes[4]));
  if (bytes[5] != kFloat64) throw fail("unsupported dtype " + std::to_string(bytes[5]));
  const std::size_t ndim = bytes[6];
  if (ndim == 0) throw fail("zero-rank tensor");
  std::size_t pos = 7;
  if (bytes.size() < pos + 8 * ndim) throw fail("truncated header");
  Shape shape(ndim);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = detail::get_u64(bytes.data() + pos);
    pos += 8;
    if (d == 0) throw fail("zero dimension");
    count *= d;
  }
  if (bytes.size() != pos + 8 * count) throw fail("payload size mismatch");
  std::vector<double> data(count);
  for (auto& v : data) {
    v = std::bit_cast<double>(detail::get_u64(bytes.data() + pos));
    pos += 8;
  }
  return Tensor(std::move(shape), std::move(data));
}

inline void write(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("bt: cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("bt: write failed for " + path.string());
}

inline Tensor read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("bt: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(bytes, path.string());
}

}  // namespace seed::bt
