// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>

#include "asablade/error.hpp"

namespace asablade {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t key = mix64(seed_ ^ 0x2545F4914F6CDD1Dull);
  return mix64(key + (++counter_) * kGolden);
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  require(n > 0, "uniform_index range must be positive");
  // Lemire's nearly-divisionless bounded draw.
  std::uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::split(std::uint64_t stream_id) const {
  return RngStream(mix64(seed_ ^ mix64(stream_id + 0x632BE59BD9B4E019ull)) + kGolden, 0);
}

std::vector<std::size_t> RngStream::sample_without_replacement(std::size_t n, std::size_t k) {
  require(k <= n, "cannot sample " + std::to_string(k) + " distinct items from " +
                      std::to_string(n));
  std::vector<std::size_t> out;
  if (k == 0) return out;
  if (k * 4 >= n) {
    // Dense case: partial Fisher-Yates.
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + uniform_index(n - i);
      std::swap(pool[i], pool[j]);
    }
    out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    // Floyd's algorithm, membership kept in a sorted vector.
    out.reserve(k);
    for (std::size_t j = n - k; j < n; ++j) {
      const std::size_t t = uniform_index(j + 1);
      const std::size_t pick = std::binary_search(out.begin(), out.end(), t) ? j : t;
      out.insert(std::lower_bound(out.begin(), out.end(), pick), pick);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace asablade
