// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "asablade/config.hpp"
#include "asablade/maskgen.hpp"
#include "asablade/tensor.hpp"

namespace asablade {

struct AttnOutput {
  Tensor out;
  FlopCounter flops;
  double effective_sparsity = 0.0;  // 1 - processed block pairs / N_b^2
};

/// Block-sparse attention: each query row runs an online softmax over the key
/// blocks its query block keeps. Skipped blocks cost nothing.
AttnOutput sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const BlockMask& mask, const AttnConfig& cfg);

/// Global-token variant. Keys and values are extended with their mean-pooled
/// windows of cfg.pool_n rows; every query sees all pooled tokens with a
/// +ln(window size) logit bias, under the same softmax normalizer as the kept
/// blocks. pool_n == 0 falls back to sparse_attention.
AttnOutput sparse_attention_gt(const Tensor& q, const Tensor& k, const Tensor& v,
                               const BlockMask& mask, const AttnConfig& cfg);

/// Materializes every logit, sends masked blocks to -inf, softmaxes, multiplies
/// by v. Reference for sparse_attention.
Tensor dense_masked_oracle(const Tensor& q, const Tensor& k, const Tensor& v,
                           const BlockMask& mask, const AttnConfig& cfg);

/// Dense reference for sparse_attention_gt, built over explicitly concatenated
/// [k; pooled k] and [v; pooled v] with one additive bias row per query.
Tensor dense_gt_oracle(const Tensor& q, const Tensor& k, const Tensor& v,
                       const BlockMask& mask, const AttnConfig& cfg);

/// exp(logit + ln n) against n * exp(logit).
struct BiasCompensation {
  std::size_t n = 1;
  double logit = 0.0;
  double biased_weight = 0.0;
  double constituent_weight = 0.0;
  bool consistent = false;  // agree within 1e-6 relative
};
BiasCompensation bias_compensation_check(std::size_t n, double logit = 0.0);

}  // namespace asablade
