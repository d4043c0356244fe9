// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "asablade/config.hpp"
#include "asablade/rng.hpp"
#include "asablade/tensor.hpp"

namespace asablade::theory {

/// Rank (1 = largest) of the maximum of k items drawn without replacement
/// from n distinct values. Works on ranks directly: the maximum of the sample
/// is its smallest rank.
std::size_t sample_max_rank_trial(std::size_t n, std::size_t k, RngStream& rng);

double analytic_mean_rank(std::size_t n, std::size_t k);
double analytic_var_rank(std::size_t n, std::size_t k);

struct RankLawReport {
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t trials = 0;
  double empirical_mean = 0.0;
  double empirical_var = 0.0;
  double analytic_mean = 0.0;
  double analytic_var = 0.0;
  double mean_rel_error() const;
  double var_rel_error() const;
};

/// Trial t uses rng.split(t); trials fan out over `threads` workers (0 picks
/// the hardware count) with results independent of the thread count.
RankLawReport rank_law_report(std::size_t n, std::size_t k, std::size_t trials,
                              const RngStream& rng, unsigned threads = 0);

inline constexpr std::array<double, 3> kConfidenceLevels = {0.68, 0.95, 0.99};

struct ConfidenceTable {
  std::size_t n = 0;
  std::size_t k = 0;
  // Upper rank bounds per confidence level.
  std::array<double, 3> normal_bound{};     // mean + z * sigma, rounded to the nearest rank
  std::array<double, 3> empirical_bound{};  // Monte Carlo quantile
  std::array<double, 3> exact_bound{};      // quantile of the exact rank distribution
  // Population percentile captured: 1 - bound / n.
  std::array<double, 3> normal_percentile{};
  std::array<double, 3> empirical_percentile{};
  double expected_rank_percentile = 0.0;  // 1 - E[rank] / n
};

ConfidenceTable confidence_percentiles(std::size_t n, std::size_t k, std::size_t trials,
                                       const RngStream& rng, unsigned threads = 0);

/// P(sample max has rank <= r), from P(min rank > r) = C(n-r, k) / C(n, k).
double exact_rank_cdf(std::size_t n, std::size_t k, std::size_t r);

struct ProportionalityReport {
  double nominal_factor = 0.0;        // b / k
  double ratio_mean = 0.0;            // entrywise sparse / full over full > 0
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  double row_sum_ratio_mean = 0.0;    // A_sparse / A_full per sampled query row
  double row_sum_ratio_nominal = 0.0; // k / b
  double normalized_max_abs_diff = 0.0;
  double normalized_mean_l1 = 0.0;    // mean over rows of the L1 distance
  double mask_overlap = 0.0;          // IoU of the two threshold masks
  double mask_row_overlap = 0.0;
  bool masks_identical = false;
};

/// Probe map against the dense oracle on the same (q, k). Both maps share the
/// rng-selected sample, so A_sparse covers exactly the probed keys.
ProportionalityReport proportionality_check(const Tensor& q, const Tensor& k,
                                            const AttnConfig& cfg, const RngStream& rng);

/// (max - 99th percentile) / max over the entries of one attention block.
/// Percentile uses linear interpolation between order statistics.
double high_quantile_diagnostic(const Tensor& block);

}  // namespace asablade::theory
