// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "asablade/config.hpp"
#include "asablade/prober.hpp"
#include "asablade/tensor.hpp"

namespace asablade {

/// Binary query-block x key-block mask.
class BlockMask {
 public:
  BlockMask() = default;
  BlockMask(std::size_t rows, std::size_t cols);

  static BlockMask full(std::size_t rows, std::size_t cols);
  /// Any non-zero entry of a rank-2 tensor counts as kept.
  static BlockMask from_tensor(const Tensor& t);
  Tensor to_tensor() const;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool kept(std::size_t i, std::size_t j) const { return bits_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool on) { bits_[i * cols_ + j] = on ? 1 : 0; }

  std::size_t kept_in_row(std::size_t i) const;
  std::vector<std::size_t> kept_per_row() const;
  std::size_t kept_total() const;
  /// 1 - kept / total.
  double sparsity() const;

  /// Rows that had no positive importance and fell back to their diagonal block.
  const std::vector<std::size_t>& degenerate_rows() const { return degenerate_rows_; }
  void mark_degenerate(std::size_t row) { degenerate_rows_.push_back(row); }

  bool operator==(const BlockMask& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && bits_ == o.bits_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
  std::vector<std::size_t> degenerate_rows_;
};

/// Block indices sorted by descending score; equal scores keep ascending index.
std::vector<std::size_t> tie_break_rank(std::span<const float> row);

/// Per-row retention range [lo, hi] in blocks for a row of `n_cols` blocks.
struct KeepRange {
  std::size_t lo;
  std::size_t hi;
};
KeepRange keep_range(const AttnConfig& cfg, std::size_t n_cols);

/// Smallest m whose top-m normalized mass reaches tau, before clamping.
/// Returns 0 for a row with no positive mass.
std::size_t blocks_for_threshold(std::span<const float> row, double tau);

/// Row-normalize, rank, keep the smallest prefix reaching tau, clamp to the
/// retention range. Rows with no positive entry keep their diagonal block.
BlockMask threshold_mask(const ImportanceMap& p, const AttnConfig& cfg);

/// Searches tau so the mask sparsity lands as close as possible to `target`.
struct TargetedMask {
  BlockMask mask;
  double tau = 1.0;
};
TargetedMask threshold_mask_for_sparsity(const ImportanceMap& p, const AttnConfig& cfg,
                                         double target_sparsity);

/// Banded mask keeping |i - j| <= window / 2.
BlockMask static_window_mask(std::size_t n_blocks, std::size_t window);

/// Window whose banded mask has sparsity closest to `target` (ties favour the
/// denser band).
std::size_t window_for_sparsity(std::size_t n_blocks, double target);

/// Intersection over union of kept entries. Two empty masks overlap fully.
double mask_overlap(const BlockMask& a, const BlockMask& b);

/// Mean over rows of per-row IoU.
double mean_row_overlap(const BlockMask& a, const BlockMask& b);

/// Heatmap dump: one CSV line per query block, 0/1 entries.
std::string mask_to_csv(const BlockMask& m);

}  // namespace asablade
