// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "asablade/config.hpp"
#include "asablade/rng.hpp"
#include "asablade/tensor.hpp"

namespace asablade {

enum class Provenance { kSparseProbe, kFullOracle };

/// N_b x N_b block importance (max-pooled attention probabilities).
struct ImportanceMap {
  Tensor values;
  Provenance provenance = Provenance::kSparseProbe;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
};

/// Zero-padded copy whose length is a multiple of the block size.
struct PaddedTensor {
  Tensor data;
  std::size_t valid_rows = 0;
};

PaddedTensor pad_to_block(const Tensor& x, std::size_t block);

/// Sampled representatives of each block, concatenated block-major.
/// Block i owns rows [offsets[i], offsets[i+1]) of `rows`; `indices` holds the
/// source row of each sample so a draw can be replayed.
struct BlockSample {
  Tensor rows;
  std::vector<std::size_t> indices;
  std::vector<std::size_t> offsets;
  std::size_t samples_per_block = 0;  // the requested k, before clamping

  std::size_t num_blocks() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

/// Picks min(k, valid rows in block) distinct rows per block. Block i draws
/// from rng.split(i), so the draw does not depend on evaluation order and
/// calling twice with the same rng selects the same rows.
BlockSample block_sample(const PaddedTensor& x, const AttnConfig& cfg, const RngStream& rng);

/// Streaming max-pooled attention map over sampled queries and keys. Keeps a
/// running row max and row sum plus the per-key-block maxima, then rescales
/// once, so the sampled score matrix is never stored.
ImportanceMap max_pooled_attn_map(const BlockSample& qs, const BlockSample& ks, float scale,
                                  FlopCounter* flops = nullptr);

/// Sample both sides with the same rng and build the probe map.
ImportanceMap probe_importance(const Tensor& q, const Tensor& k, const AttnConfig& cfg,
                               const RngStream& rng, FlopCounter* flops = nullptr);

/// Full softmax(q k^T scale) max-pooled over b x b tiles. The oracle the probe
/// approximates.
ImportanceMap dense_importance_map(const Tensor& q, const Tensor& k, const AttnConfig& cfg,
                                   FlopCounter* flops = nullptr);

}  // namespace asablade
