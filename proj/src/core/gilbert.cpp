// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/gilbert.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>

#include "asablade/error.hpp"

namespace asablade {

namespace {

int sgn(int v) { return (v > 0) - (v < 0); }

struct V2 {
  int x, y;
};
V2 operator+(V2 a, V2 b) { return {a.x + b.x, a.y + b.y}; }
V2 operator-(V2 a, V2 b) { return {a.x - b.x, a.y - b.y}; }
V2 operator-(V2 a) { return {-a.x, -a.y}; }
V2 half(V2 a) { return {a.x / 2, a.y / 2}; }
V2 unit(V2 a) { return {sgn(a.x), sgn(a.y)}; }
int len(V2 a) { return std::abs(a.x + a.y); }

// Fills the rectangle spanned by major axis `a` and minor axis `b` from `p`.
void generate2d(V2 p, V2 a, V2 b, std::vector<std::array<int, 2>>& out) {
  const int w = len(a), h = len(b);
  const V2 da = unit(a), db = unit(b);
  if (h == 1) {
    for (int i = 0; i < w; ++i, p = p + da) out.push_back({p.x, p.y});
    return;
  }
  if (w == 1) {
    for (int i = 0; i < h; ++i, p = p + db) out.push_back({p.x, p.y});
    return;
  }
  V2 a2 = half(a), b2 = half(b);
  if (2 * w > 3 * h) {
    // Long case: split the major axis only, keeping the halves even.
    if ((len(a2) % 2) && w > 2) a2 = a2 + da;
    generate2d(p, a2, b, out);
    generate2d(p + a2, a - a2, b, out);
  } else {
    if ((len(b2) % 2) && h > 2) b2 = b2 + db;
    generate2d(p, b2, a2, out);
    generate2d(p + b2, a, b - b2, out);
    generate2d(p + (a - da) + (b2 - db), -b2, -(a - a2), out);
  }
}

struct V3 {
  int x, y, z;
};
V3 operator+(V3 a, V3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
V3 operator-(V3 a, V3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
V3 operator-(V3 a) { return {-a.x, -a.y, -a.z}; }
V3 half(V3 a) { return {a.x / 2, a.y / 2, a.z / 2}; }
V3 unit(V3 a) { return {sgn(a.x), sgn(a.y), sgn(a.z)}; }
int len(V3 a) { return std::abs(a.x + a.y + a.z); }

void generate3d(V3 p, V3 a, V3 b, V3 c, std::vector<std::array<int, 3>>& out) {
  const int w = len(a), h = len(b), d = len(c);
  const V3 da = unit(a), db = unit(b), dc = unit(c);
  auto line = [&](int n, V3 step) {
    for (int i = 0; i < n; ++i, p = p + step) out.push_back({p.x, p.y, p.z});
  };
  if (h == 1 && d == 1) return line(w, da);
  if (w == 1 && d == 1) return line(h, db);
  if (w == 1 && h == 1) return line(d, dc);

  V3 a2 = half(a), b2 = half(b), c2 = half(c);
  if ((len(a2) % 2) && w > 2) a2 = a2 + da;
  if ((len(b2) % 2) && h > 2) b2 = b2 + db;
  if ((len(c2) % 2) && d > 2) c2 = c2 + dc;

  if (2 * w > 3 * h && 2 * w > 3 * d) {
    generate3d(p, a2, b, c, out);
    generate3d(p + a2, a - a2, b, c, out);
  } else if (3 * h > 4 * d) {
    generate3d(p, b2, c, a2, out);
    generate3d(p + b2, a, b - b2, c, out);
    generate3d(p + (a - da) + (b2 - db), -b2, c, -(a - a2), out);
  } else if (3 * d > 4 * h) {
    generate3d(p, c2, a2, b, out);
    generate3d(p + c2, a, b, c - c2, out);
    generate3d(p + (a - da) + (c2 - dc), -c2, -(a - a2), b, out);
  } else {
    generate3d(p, b2, c2, a2, out);
    generate3d(p + b2, c, a2, b - b2, out);
    generate3d(p + (b2 - db) + (c - dc), a, -b2, -(c - c2), out);
    generate3d(p + (a - da) + b2 + (c - dc), -c, -(a - a2), b - b2, out);
    generate3d(p + (a - da) + (b2 - db), -b2, c2, -(a - a2), out);
  }
}

std::size_t count_jumps(const std::vector<std::array<int, 3>>& cells) {
  std::size_t jumps = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    int dist = 0;
    for (int k = 0; k < 3; ++k) dist += std::abs(cells[i][k] - cells[i - 1][k]);
    if (dist != 1) ++jumps;
  }
  return jumps;
}

}  // namespace

std::vector<std::array<int, 2>> gilbert_curve_2d(int width, int height) {
  require(width >= 1 && height >= 1, "gilbert: extents must be positive");
  std::vector<std::array<int, 2>> out;
  out.reserve(static_cast<std::size_t>(width) * height);
  const V2 along_x{width, 0}, along_y{0, height};
  // A corner-to-corner path along the major axis needs an even major extent
  // unless both are odd; otherwise run along the other axis so the path ends
  // on the far corner and stays 4-connected.
  if (width >= height) {
    const bool flip = (width % 2 == 1) && (height % 2 == 0);
    flip ? generate2d({0, 0}, along_y, along_x, out) : generate2d({0, 0}, along_x, along_y, out);
  } else {
    const bool flip = (height % 2 == 1) && (width % 2 == 0);
    flip ? generate2d({0, 0}, along_x, along_y, out) : generate2d({0, 0}, along_y, along_x, out);
  }
  return out;
}

std::vector<std::array<int, 3>> gilbert_curve_3d(int width, int height, int depth) {
  require(width >= 1 && height >= 1 && depth >= 1, "gilbert: extents must be positive");
  const std::array<V3, 3> axes = {V3{width, 0, 0}, V3{0, height, 0}, V3{0, 0, depth}};
  const std::array<int, 3> lens = {width, height, depth};
  const int longest = std::max({width, height, depth});

  std::vector<std::array<int, 3>> best;
  std::size_t best_jumps = 0;
  std::array<int, 3> order = {0, 1, 2};
  do {
    // The recursion assumes the major axis is the longest one.
    if (lens[order[0]] != longest) continue;
    std::vector<std::array<int, 3>> cells;
    cells.reserve(static_cast<std::size_t>(width) * height * depth);
    generate3d({0, 0, 0}, axes[order[0]], axes[order[1]], axes[order[2]], cells);
    const std::size_t jumps = count_jumps(cells);
    if (best.empty() || jumps < best_jumps) {
      best = std::move(cells);
      best_jumps = jumps;
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

Permutation::Permutation(std::vector<std::size_t> forward) : forward_(std::move(forward)) {
  inverse_.assign(forward_.size(), forward_.size());
  for (std::size_t i = 0; i < forward_.size(); ++i) {
    const std::size_t f = forward_[i];
    require(f < forward_.size() && inverse_[f] == forward_.size(),
            "permutation: index " + std::to_string(f) + " out of range or repeated");
    inverse_[f] = i;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> f(n);
  std::iota(f.begin(), f.end(), std::size_t{0});
  return Permutation(std::move(f));
}

Permutation gilbert_order(const TokenGrid& grid, CurveMode mode) {
  require(grid.t >= 1 && grid.h >= 1 && grid.w >= 1, "gilbert: grid extents must be positive");
  const std::size_t hw = grid.h * grid.w;
  std::vector<std::size_t> forward;
  forward.reserve(grid.size());

  if (mode == CurveMode::kRaster) return Permutation::identity(grid.size());

  auto frame_major = [&] {
    const auto cells = gilbert_curve_2d(static_cast<int>(grid.w), static_cast<int>(grid.h));
    for (std::size_t f = 0; f < grid.t; ++f)
      for (const auto& c : cells) forward.push_back(f * hw + std::size_t(c[1]) * grid.w + c[0]);
  };

  if (mode == CurveMode::kPerFrame2d || grid.t == 1) {
    frame_major();
  } else if (grid.h == 1) {
    // Flat (t, w) slab.
    for (const auto& c : gilbert_curve_2d(static_cast<int>(grid.w), static_cast<int>(grid.t)))
      forward.push_back(std::size_t(c[1]) * hw + c[0]);
  } else if (grid.w == 1) {
    for (const auto& c : gilbert_curve_2d(static_cast<int>(grid.h), static_cast<int>(grid.t)))
      forward.push_back(std::size_t(c[1]) * hw + std::size_t(c[0]));
  } else {
    for (const auto& c : gilbert_curve_3d(static_cast<int>(grid.w), static_cast<int>(grid.h),
                                          static_cast<int>(grid.t)))
      forward.push_back(std::size_t(c[2]) * hw + std::size_t(c[1]) * grid.w + c[0]);
  }
  return Permutation(std::move(forward));
}

Tensor apply_permutation(const Tensor& x, const Permutation& p) {
  require(x.rank() >= 1 && x.rows() == p.size(),
          "apply_permutation: tensor has " + std::to_string(x.rows()) + " rows, permutation " +
              std::to_string(p.size()));
  Tensor out(x.shape());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto src = x.row(p.forward()[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Tensor undo_permutation(const Tensor& x, const Permutation& p) {
  require(x.rank() >= 1 && x.rows() == p.size(),
          "undo_permutation: tensor has " + std::to_string(x.rows()) + " rows, permutation " +
              std::to_string(p.size()));
  Tensor out(x.shape());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto src = x.row(i);
    std::copy(src.begin(), src.end(), out.row(p.forward()[i]).begin());
  }
  return out;
}

double mean_intra_block_distance(const TokenGrid& grid, const Permutation& order,
                                 std::size_t block) {
  require(block >= 1, "block size must be positive");
  require(order.size() == grid.size(), "order does not cover the grid");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t start = 0; start < order.size(); start += block) {
    const std::size_t end = std::min(order.size(), start + block);
    for (std::size_t i = start; i < end; ++i) {
      const auto a = grid.coords(order.forward()[i]);
      for (std::size_t j = i + 1; j < end; ++j) {
        const auto b = grid.coords(order.forward()[j]);
        for (int k = 0; k < 3; ++k)
          sum += static_cast<double>(a[k] > b[k] ? a[k] - b[k] : b[k] - a[k]);
        ++pairs;
      }
    }
  }
  return pairs ? sum / static_cast<double>(pairs) : 0.0;
}

}  // namespace asablade
