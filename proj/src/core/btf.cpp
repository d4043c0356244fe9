// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/btf.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "asablade/error.hpp"

namespace asablade::btf {

namespace {

constexpr std::array<char, 4> kMagic = {'B', 'T', 'F', '1'};
constexpr std::uint32_t kMaxRank = 16;

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) fail_validation("btf: truncated header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

}  // namespace

void write(std::ostream& os, const Tensor& t) {
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_u32(os, static_cast<std::uint32_t>(e));
  for (float f : t.values()) put_u32(os, std::bit_cast<std::uint32_t>(f));
  if (!os) throw Error(ErrorKind::kIo, "btf: write failed");
}

Tensor read(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    fail_validation("btf: bad magic (expected BTF1)");
  const std::uint32_t rank = get_u32(is);
  require(rank >= 1 && rank <= kMaxRank, "btf: unsupported rank " + std::to_string(rank));
  std::vector<std::size_t> shape(rank);
  std::size_t volume = 1;
  for (auto& e : shape) {
    e = get_u32(is);
    require(e > 0, "btf: zero extent");
    volume *= e;
  }
  std::vector<float> data(volume);
  for (auto& f : data) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) fail_validation("btf: truncated payload");
    f = std::bit_cast<float>(std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
                             std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24);
  }
  return Tensor(std::move(shape), std::move(data));
}

void save(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "btf: cannot open " + path + " for writing");
  write(os, t);
}

Tensor load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "btf: cannot open " + path);
  return read(is);
}

}  // namespace asablade::btf
