// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "asablade/tensor.hpp"

namespace asablade {

/// Video token grid. Raster index of (f, y, x) is f*h*w + y*w + x.
struct TokenGrid {
  std::size_t t = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t size() const { return t * h * w; }
  std::array<std::size_t, 3> coords(std::size_t raster) const {
    return {raster / (h * w), (raster / w) % h, raster % w};
  }
};

enum class CurveMode {
  kGilbert3d,      // one curve through the whole (t, h, w) volume
  kPerFrame2d,     // a 2D curve per frame, frames visited in order
  kRaster,         // no reordering
};

/// Token reordering. forward[i] is the raster index placed at position i.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> forward);

  static Permutation identity(std::size_t n);

  std::size_t size() const { return forward_.size(); }
  const std::vector<std::size_t>& forward() const { return forward_; }
  const std::vector<std::size_t>& inverse() const { return inverse_; }

 private:
  std::vector<std::size_t> forward_;
  std::vector<std::size_t> inverse_;
};

/// Generalized Hilbert ordering of the grid. Every 2D grid (any extent equal
/// to 1) gets a path whose consecutive cells are 4-neighbours. Full 3D grids
/// keep that property when the construction allows it; odd extents can force
/// a few seam jumps, and the orientation with the fewest is chosen.
Permutation gilbert_order(const TokenGrid& grid, CurveMode mode = CurveMode::kGilbert3d);

/// Raw 2D curve as (x, y) cells for a width x height rectangle.
std::vector<std::array<int, 2>> gilbert_curve_2d(int width, int height);

/// Raw 3D curve as (x, y, z) cells; x spans width, z spans depth.
std::vector<std::array<int, 3>> gilbert_curve_3d(int width, int height, int depth);

/// out[i] = x[p.forward[i]]
Tensor apply_permutation(const Tensor& x, const Permutation& p);
/// Inverse of apply_permutation.
Tensor undo_permutation(const Tensor& x, const Permutation& p);

/// Mean pairwise Manhattan distance between grid cells sharing a block of
/// `block` consecutive positions in the given order.
double mean_intra_block_distance(const TokenGrid& grid, const Permutation& order,
                                 std::size_t block);

}  // namespace asablade
