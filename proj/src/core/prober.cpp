// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/prober.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asablade/error.hpp"

namespace asablade {

void AttnConfig::validate() const {
  require(block >= 1, "block size must be >= 1");
  require(samples >= 1 && samples <= block,
          "samples per block must satisfy 1 <= k <= b (k=" + std::to_string(samples) +
              ", b=" + std::to_string(block) + ")");
  require(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
  require(min_keep >= 0.0 && min_keep <= max_keep && max_keep <= 1.0,
          "retention clamps must satisfy 0 <= min_keep <= max_keep <= 1");
  require(scale >= 0.0 && std::isfinite(scale), "scale must be finite and non-negative");
}

PaddedTensor pad_to_block(const Tensor& x, std::size_t block) {
  require(block >= 1, "pad_to_block: block size must be >= 1");
  require(x.rank() == 2, "pad_to_block expects an N x d matrix");
  const std::size_t n = x.rows(), d = x.cols();
  const std::size_t padded = num_blocks(n, block) * block;
  if (padded == n) return {x, n};
  Tensor out = Tensor::zeros(padded, d);
  std::copy(x.values().begin(), x.values().end(), out.values().begin());
  return {std::move(out), n};
}

BlockSample block_sample(const PaddedTensor& x, const AttnConfig& cfg, const RngStream& rng) {
  require(cfg.block >= 1 && cfg.samples >= 1 && cfg.samples <= cfg.block,
          "block_sample: need 1 <= k <= b");
  const std::size_t b = cfg.block, d = x.data.cols();
  const std::size_t nb = num_blocks(x.valid_rows, b);
  require(x.data.rows() >= nb * b, "block_sample: input is not padded to the block size");

  BlockSample out;
  out.samples_per_block = cfg.samples;
  out.offsets.push_back(0);
  for (std::size_t blk = 0; blk < nb; ++blk) {
    const std::size_t start = blk * b;
    const std::size_t valid = std::min(b, x.valid_rows - start);
    const std::size_t k = std::min(cfg.samples, valid);
    std::vector<std::size_t> picks;
    if (cfg.sampling == SamplingMode::kStrided) {
      for (std::size_t m = 0; m < k; ++m) picks.push_back(m * valid / k);
    } else {
      RngStream block_rng = rng.split(blk);
      picks = block_rng.sample_without_replacement(valid, k);
    }
    for (auto p : picks) out.indices.push_back(start + p);
    out.offsets.push_back(out.indices.size());
  }

  out.rows = Tensor::zeros(std::max<std::size_t>(out.indices.size(), 1), d);
  for (std::size_t i = 0; i < out.indices.size(); ++i) {
    const auto src = x.data.row(out.indices[i]);
    std::copy(src.begin(), src.end(), out.rows.row(i).begin());
  }
  return out;
}

ImportanceMap max_pooled_attn_map(const BlockSample& qs, const BlockSample& ks, float scale,
                                  FlopCounter* flops) {
  require(qs.samples_per_block == ks.samples_per_block,
          "max_pooled_attn_map: query and key samples use different k (" +
              std::to_string(qs.samples_per_block) + " vs " +
              std::to_string(ks.samples_per_block) + ")");
  require(qs.rows.cols() == ks.rows.cols(), "max_pooled_attn_map: head dims differ");
  const std::size_t nbq = qs.num_blocks(), nbk = ks.num_blocks();
  require(nbq > 0 && nbk > 0, "max_pooled_attn_map: empty sample");
  const std::size_t d = qs.rows.cols();

  Tensor out = Tensor::zeros(nbq, nbk);
  std::vector<double> block_max(nbk);  // R: per key-block max logit for the current row
  std::vector<double> tile;            // one row of one k x k sampled tile
  FlopCounter f;

  for (std::size_t i = 0; i < nbq; ++i) {
    for (std::size_t r = qs.offsets[i]; r < qs.offsets[i + 1]; ++r) {
      const auto qr = qs.rows.row(r);
      double run_max = -std::numeric_limits<double>::infinity();  // M
      double run_sum = 0.0;                                        // l
      for (std::size_t j = 0; j < nbk; ++j) {
        const std::size_t lo = ks.offsets[j], hi = ks.offsets[j + 1];
        double m_ij = -std::numeric_limits<double>::infinity();
        tile.resize(hi - lo);
        for (std::size_t t = lo; t < hi; ++t) {
          const auto kt = ks.rows.row(t);
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(qr[c]) * kt[c];
          tile[t - lo] = dot * scale;
          m_ij = std::max(m_ij, tile[t - lo]);
        }
        double l_ij = 0.0;
        for (double s : tile) l_ij += std::exp(s - m_ij);
        const double m_new = std::max(run_max, m_ij);
        run_sum = std::exp(run_max - m_new) * run_sum + std::exp(m_ij - m_new) * l_ij;
        run_max = m_new;
        block_max[j] = m_ij;

        const std::uint64_t n = hi - lo;
        f.mults += n * (d + 1) + 2;
        f.adds += n * (d - 1) + n + (n - 1) + 1;
        f.exps += n + 2;
      }
      for (std::size_t j = 0; j < nbk; ++j) {
        const double p = std::exp(block_max[j] - run_max) / run_sum;
        out(i, j) = std::max(out(i, j), static_cast<float>(p));
      }
      f.mults += nbk;
      f.adds += nbk;
      f.exps += nbk;
    }
  }
  if (flops) *flops += f;
  out.check_finite("max_pooled_attn_map");
  return {std::move(out), Provenance::kSparseProbe};
}

ImportanceMap probe_importance(const Tensor& q, const Tensor& k, const AttnConfig& cfg,
                               const RngStream& rng, FlopCounter* flops) {
  cfg.validate();
  require(q.rank() == 2 && k.rank() == 2 && q.cols() == k.cols(),
          "probe: q and k must be N x d with equal d");
  const BlockSample qs = block_sample(pad_to_block(q, cfg.block), cfg, rng);
  const BlockSample ks = block_sample(pad_to_block(k, cfg.block), cfg, rng);
  return max_pooled_attn_map(qs, ks, cfg.effective_scale(q.cols()), flops);
}

ImportanceMap dense_importance_map(const Tensor& q, const Tensor& k, const AttnConfig& cfg,
                                   FlopCounter* flops) {
  require(cfg.block >= 1, "dense_importance_map: block size must be >= 1");
  require(q.rank() == 2 && k.rank() == 2 && q.cols() == k.cols(),
          "dense_importance_map: q and k must be N x d with equal d");
  const Tensor p = row_softmax(matmul_transposed(q, k, cfg.effective_scale(q.cols()), flops),
                               1.0f, flops);
  const std::size_t b = cfg.block;
  const std::size_t nbq = num_blocks(q.rows(), b), nbk = num_blocks(k.rows(), b);
  Tensor out = Tensor::zeros(nbq, nbk);
  for (std::size_t r = 0; r < q.rows(); ++r) {
    const auto pr = p.row(r);
    for (std::size_t c = 0; c < k.rows(); ++c) {
      float& cell = out(r / b, c / b);
      cell = std::max(cell, pr[c]);
    }
  }
  return {std::move(out), Provenance::kFullOracle};
}

}  // namespace asablade
