// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/theory.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

#include "asablade/error.hpp"
#include "asablade/maskgen.hpp"
#include "asablade/prober.hpp"

namespace asablade::theory {

namespace {

// Floyd's sampler over [0, n) keeping only the minimum. `stamp` marks chosen
// slots with the current `epoch`, so the buffer is never cleared.
std::size_t min_rank_floyd(std::size_t n, std::size_t k, RngStream& rng,
                           std::vector<std::uint32_t>& stamp, std::uint32_t epoch) {
  std::size_t best = n;
  for (std::size_t j = n - k; j < n; ++j) {
    const std::size_t t = rng.uniform_index(j + 1);
    const std::size_t pick = stamp[t] == epoch ? j : t;
    stamp[pick] = epoch;
    best = std::min(best, pick);
  }
  return best + 1;
}

std::vector<std::uint32_t> simulate_ranks(std::size_t n, std::size_t k, std::size_t trials,
                                          const RngStream& rng, unsigned threads) {
  require(k >= 1 && k <= n, "rank trial needs 1 <= k <= n");
  require(trials >= 1, "need at least one trial");
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, trials));

  std::vector<std::uint32_t> ranks(trials);
  auto work = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::uint32_t> stamp(n, 0);
    std::uint32_t epoch = 0;
    for (std::size_t t = lo; t < hi; ++t) {
      if (++epoch == 0) {
        std::fill(stamp.begin(), stamp.end(), 0);
        epoch = 1;
      }
      RngStream trial_rng = rng.split(t);
      ranks[t] = static_cast<std::uint32_t>(min_rank_floyd(n, k, trial_rng, stamp, epoch));
    }
  };
  std::vector<std::thread> pool;
  const std::size_t chunk = (trials + threads - 1) / threads;
  for (unsigned w = 0; w < threads; ++w) {
    const std::size_t lo = w * chunk, hi = std::min(trials, lo + chunk);
    if (lo < hi) pool.emplace_back(work, lo, hi);
  }
  for (auto& th : pool) th.join();
  return ranks;
}

// Upper bound covering at least `level` of the sorted sample.
double empirical_quantile(const std::vector<std::uint32_t>& sorted, double level) {
  auto idx = static_cast<std::size_t>(std::ceil(level * double(sorted.size())));
  idx = std::clamp<std::size_t>(idx, 1, sorted.size());
  return sorted[idx - 1];
}

Tensor row_normalized(const Tensor& m) {
  Tensor out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double s = 0.0;
    for (float v : out.row(i)) s += v;
    if (s > 0.0)
      for (float& v : out.row(i)) v = static_cast<float>(v / s);
  }
  return out;
}

}  // namespace

std::size_t sample_max_rank_trial(std::size_t n, std::size_t k, RngStream& rng) {
  require(k >= 1 && k <= n, "rank trial needs 1 <= k <= n (k=" + std::to_string(k) +
                                ", n=" + std::to_string(n) + ")");
  std::vector<std::uint32_t> stamp(n, 0);
  return min_rank_floyd(n, k, rng, stamp, 1);
}

double analytic_mean_rank(std::size_t n, std::size_t k) {
  return (double(n) + 1.0) / (double(k) + 1.0);
}

double analytic_var_rank(std::size_t n, std::size_t k) {
  const double nn = double(n), kk = double(k);
  return kk * (nn - kk) * (nn + 1.0) / ((kk + 1.0) * (kk + 1.0) * (kk + 2.0));
}

double RankLawReport::mean_rel_error() const {
  return std::abs(empirical_mean - analytic_mean) / analytic_mean;
}

double RankLawReport::var_rel_error() const {
  if (analytic_var == 0.0) return empirical_var == 0.0 ? 0.0 : INFINITY;
  return std::abs(empirical_var - analytic_var) / analytic_var;
}

RankLawReport rank_law_report(std::size_t n, std::size_t k, std::size_t trials,
                              const RngStream& rng, unsigned threads) {
  require(trials >= 2, "rank law report needs at least two trials");
  const auto ranks = simulate_ranks(n, k, trials, rng, threads);
  // Integer sums keep the reduction exact and order independent.
  std::uint64_t s1 = 0, s2 = 0;
  for (auto r : ranks) {
    s1 += r;
    s2 += std::uint64_t(r) * r;
  }
  RankLawReport rep;
  rep.n = n;
  rep.k = k;
  rep.trials = trials;
  const double t = double(trials);
  rep.empirical_mean = double(s1) / t;
  rep.empirical_var =
      trials > 1 ? (double(s2) - double(s1) * double(s1) / t) / (t - 1.0) : 0.0;
  rep.analytic_mean = analytic_mean_rank(n, k);
  rep.analytic_var = analytic_var_rank(n, k);
  return rep;
}

double exact_rank_cdf(std::size_t n, std::size_t k, std::size_t r) {
  require(k >= 1 && k <= n, "exact_rank_cdf needs 1 <= k <= n");
  if (r == 0) return 0.0;
  if (r + k > n) return 1.0;
  double log_tail = 0.0;  // log P(min rank > r)
  for (std::size_t i = 0; i < k; ++i)
    log_tail += std::log(double(n - r - i)) - std::log(double(n - i));
  return 1.0 - std::exp(log_tail);
}

ConfidenceTable confidence_percentiles(std::size_t n, std::size_t k, std::size_t trials,
                                       const RngStream& rng, unsigned threads) {
  auto ranks = simulate_ranks(n, k, trials, rng, threads);
  std::sort(ranks.begin(), ranks.end());
  constexpr std::array<double, 3> kZ = {1.0, 1.96, 2.576};

  ConfidenceTable tab;
  tab.n = n;
  tab.k = k;
  const double mean = analytic_mean_rank(n, k);
  const double sigma = std::sqrt(analytic_var_rank(n, k));
  for (std::size_t i = 0; i < kConfidenceLevels.size(); ++i) {
    const double level = kConfidenceLevels[i];
    tab.normal_bound[i] = std::clamp(std::round(mean + kZ[i] * sigma), 1.0, double(n));
    tab.empirical_bound[i] = empirical_quantile(ranks, level);
    std::size_t r = 1;
    while (exact_rank_cdf(n, k, r) < level) ++r;
    tab.exact_bound[i] = double(r);
    tab.normal_percentile[i] = 1.0 - tab.normal_bound[i] / double(n);
    tab.empirical_percentile[i] = 1.0 - tab.empirical_bound[i] / double(n);
  }
  tab.expected_rank_percentile = 1.0 - mean / double(n);
  return tab;
}

ProportionalityReport proportionality_check(const Tensor& q, const Tensor& k,
                                            const AttnConfig& cfg, const RngStream& rng) {
  cfg.validate();
  const ImportanceMap sparse = probe_importance(q, k, cfg, rng);
  const ImportanceMap full = dense_importance_map(q, k, cfg);

  ProportionalityReport rep;
  rep.nominal_factor = double(cfg.block) / double(cfg.samples);
  rep.row_sum_ratio_nominal = double(cfg.samples) / double(cfg.block);

  double ratio_sum = 0.0;
  std::size_t ratio_n = 0;
  rep.ratio_min = INFINITY;
  rep.ratio_max = 0.0;
  for (std::size_t i = 0; i < full.values.size(); ++i) {
    const double f = full.values.values()[i];
    if (f <= 0.0) continue;
    const double r = sparse.values.values()[i] / f;
    ratio_sum += r;
    ++ratio_n;
    rep.ratio_min = std::min(rep.ratio_min, r);
    rep.ratio_max = std::max(rep.ratio_max, r);
  }
  rep.ratio_mean = ratio_n ? ratio_sum / double(ratio_n) : 0.0;
  if (!ratio_n) rep.ratio_min = 0.0;

  // Softmax denominators of the sampled query rows: probed keys vs all keys.
  const BlockSample qs = block_sample(pad_to_block(q, cfg.block), cfg, rng);
  const BlockSample ks = block_sample(pad_to_block(k, cfg.block), cfg, rng);
  const double scale = cfg.effective_scale(q.cols());
  double row_ratio_sum = 0.0;
  for (std::size_t s : qs.indices) {
    std::vector<double> logits(k.rows());
    for (std::size_t t = 0; t < k.rows(); ++t) {
      double dot = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) dot += double(q(s, c)) * k(t, c);
      logits[t] = dot * scale;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double a_full = 0.0, a_sparse = 0.0;
    for (double l : logits) a_full += std::exp(l - mx);
    for (std::size_t t : ks.indices) a_sparse += std::exp(logits[t] - mx);
    row_ratio_sum += a_sparse / a_full;
  }
  rep.row_sum_ratio_mean = row_ratio_sum / double(qs.indices.size());

  const Tensor ns = row_normalized(sparse.values), nf = row_normalized(full.values);
  double l1_total = 0.0;
  for (std::size_t i = 0; i < ns.rows(); ++i) {
    double l1 = 0.0;
    for (std::size_t j = 0; j < ns.cols(); ++j) {
      const double d = std::abs(double(ns(i, j)) - nf(i, j));
      l1 += d;
      rep.normalized_max_abs_diff = std::max(rep.normalized_max_abs_diff, d);
    }
    l1_total += l1;
  }
  rep.normalized_mean_l1 = l1_total / double(ns.rows());

  const BlockMask ms = threshold_mask(sparse, cfg), mf = threshold_mask(full, cfg);
  rep.mask_overlap = mask_overlap(ms, mf);
  rep.mask_row_overlap = mean_row_overlap(ms, mf);
  rep.masks_identical = ms == mf;
  return rep;
}

double high_quantile_diagnostic(const Tensor& block) {
  require(!block.empty(), "high_quantile_diagnostic: empty block");
  std::vector<double> v(block.values().begin(), block.values().end());
  std::sort(v.begin(), v.end());
  const double pos = 0.99 * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double p99 = v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
  const double mx = v.back();
  if (mx <= 0.0) return 0.0;
  return (mx - p99) / mx;
}

}  // namespace asablade::theory
