// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "asablade/error.hpp"

namespace asablade {

BlockMask::BlockMask(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

BlockMask BlockMask::full(std::size_t rows, std::size_t cols) {
  BlockMask m(rows, cols);
  std::fill(m.bits_.begin(), m.bits_.end(), 1);
  return m;
}

BlockMask BlockMask::from_tensor(const Tensor& t) {
  require(t.rank() == 2, "block mask tensor must be rank 2");
  BlockMask m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) m.bits_[i] = t.values()[i] != 0.0f ? 1 : 0;
  return m;
}

Tensor BlockMask::to_tensor() const {
  Tensor t({rows_, cols_});
  for (std::size_t i = 0; i < bits_.size(); ++i) t.values()[i] = bits_[i] ? 1.0f : 0.0f;
  return t;
}

std::size_t BlockMask::kept_in_row(std::size_t i) const {
  return static_cast<std::size_t>(std::count(bits_.begin() + i * cols_,
                                             bits_.begin() + (i + 1) * cols_, 1));
}

std::vector<std::size_t> BlockMask::kept_per_row() const {
  std::vector<std::size_t> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = kept_in_row(i);
  return out;
}

std::size_t BlockMask::kept_total() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

double BlockMask::sparsity() const {
  if (bits_.empty()) return 0.0;
  return 1.0 - static_cast<double>(kept_total()) / static_cast<double>(bits_.size());
}

std::vector<std::size_t> tie_break_rank(std::span<const float> row) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  return order;
}

KeepRange keep_range(const AttnConfig& cfg, std::size_t n_cols) {
  // Guard the ceil/floor against products like 0.05 * 20 = 1.0000000000000002.
  constexpr double kSlack = 1e-9;
  const double n = static_cast<double>(n_cols);
  auto lo = static_cast<std::size_t>(std::ceil(cfg.min_keep * n - kSlack));
  auto hi = static_cast<std::size_t>(std::floor(cfg.max_keep * n + kSlack));
  hi = std::clamp<std::size_t>(hi, 1, n_cols);
  lo = std::clamp<std::size_t>(lo, 1, hi);
  return {lo, hi};
}

std::size_t blocks_for_threshold(std::span<const float> row, double tau) {
  const auto order = tie_break_rank(row);
  // Summing in rank order makes the final prefix equal the total exactly, so
  // tau = 1 reaches the last positive block without rounding slack.
  double total = 0.0;
  for (auto j : order) total += std::max(0.0f, row[j]);
  if (!(total > 0.0)) return 0;
  double cum = 0.0;
  for (std::size_t m = 0; m < order.size(); ++m) {
    cum += std::max(0.0f, row[order[m]]);
    if (cum / total >= tau) return m + 1;
  }
  return order.size();
}

BlockMask threshold_mask(const ImportanceMap& p, const AttnConfig& cfg) {
  require(cfg.tau > 0.0 && cfg.tau <= 1.0, "tau must lie in (0, 1]");
  require(cfg.min_keep >= 0.0 && cfg.min_keep <= cfg.max_keep && cfg.max_keep <= 1.0,
          "retention clamps must satisfy 0 <= min_keep <= max_keep <= 1");
  const std::size_t rows = p.rows(), cols = p.cols();
  require(rows > 0 && cols > 0, "threshold_mask: empty importance map");
  for (float v : p.values.values())
    require(v >= 0.0f && std::isfinite(v), "threshold_mask: importance entries must be finite and >= 0");

  const KeepRange range = keep_range(cfg, cols);
  BlockMask mask(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto row = p.values.row(i);
    const std::size_t m = blocks_for_threshold(row, cfg.tau);
    if (m == 0) {
      mask.set(i, std::min(i, cols - 1), true);
      mask.mark_degenerate(i);
      continue;
    }
    const std::size_t keep = std::clamp(m, range.lo, range.hi);
    const auto order = tie_break_rank(row);
    for (std::size_t r = 0; r < keep; ++r) mask.set(i, order[r], true);
  }
  return mask;
}

TargetedMask threshold_mask_for_sparsity(const ImportanceMap& p, const AttnConfig& cfg,
                                         double target_sparsity) {
  require(target_sparsity >= 0.0 && target_sparsity <= 1.0, "target sparsity must lie in [0, 1]");
  // Sparsity is non-increasing in tau, so bisect on tau.
  AttnConfig c = cfg;
  auto at = [&](double tau) {
    c.tau = tau;
    return threshold_mask(p, c);
  };
  double lo = 1e-9, hi = 1.0;
  TargetedMask best{at(hi), hi};
  double best_gap = std::abs(best.mask.sparsity() - target_sparsity);
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    BlockMask m = at(mid);
    const double s = m.sparsity();
    const double gap = std::abs(s - target_sparsity);
    if (gap < best_gap || (gap == best_gap && mid > best.tau)) {
      best_gap = gap;
      best = {std::move(m), mid};
    }
    if (s > target_sparsity) {
      lo = mid;  // too sparse: raise tau
    } else {
      hi = mid;
    }
  }
  return best;
}

BlockMask static_window_mask(std::size_t n_blocks, std::size_t window) {
  require(window >= 1, "static window must be >= 1");
  require(n_blocks >= 1, "static window mask needs at least one block");
  const std::size_t half = window / 2;
  BlockMask m(n_blocks, n_blocks);
  for (std::size_t i = 0; i < n_blocks; ++i)
    for (std::size_t j = 0; j < n_blocks; ++j)
      if ((i > j ? i - j : j - i) <= half) m.set(i, j, true);
  return m;
}

std::size_t window_for_sparsity(std::size_t n_blocks, double target) {
  std::size_t best = 1;
  double best_gap = 2.0;
  for (std::size_t w = 1; w <= 2 * n_blocks + 1; w += 2) {
    const double gap = std::abs(static_window_mask(n_blocks, w).sparsity() - target);
    if (gap < best_gap - 1e-12) {
      best_gap = gap;
      best = w;
    }
  }
  return best;
}

double mask_overlap(const BlockMask& a, const BlockMask& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mask_overlap: shape mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      inter += a.kept(i, j) && b.kept(i, j);
      uni += a.kept(i, j) || b.kept(i, j);
    }
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

double mean_row_overlap(const BlockMask& a, const BlockMask& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mean_row_overlap: shape mismatch");
  if (a.rows() == 0) return 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      inter += a.kept(i, j) && b.kept(i, j);
      uni += a.kept(i, j) || b.kept(i, j);
    }
    sum += uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
  }
  return sum / static_cast<double>(a.rows());
}

std::string mask_to_csv(const BlockMask& m) {
  std::ostringstream os;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) os << (j ? "," : "") << (m.kept(i, j) ? 1 : 0);
    os << '\n';
  }
  return os.str();
}

}  // namespace asablade
