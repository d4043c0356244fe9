// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>

#include "asablade/gilbert.hpp"

namespace asablade {

enum class SamplingMode {
  kUniform,  // k distinct rows per block, uniformly without replacement
  kStrided,  // evenly spaced rows, no randomness (ablation)
};

/// Adaptive block-sparse attention hyperparameters.
struct AttnConfig {
  std::size_t block = 128;
  std::size_t samples = 16;
  double tau = 0.9;
  double min_keep = 0.05;
  double max_keep = 1.0;
  std::size_t pool_n = 0;  // global-token window, 0 disables
  double scale = 0.0;      // 0 means 1/sqrt(head_dim)
  SamplingMode sampling = SamplingMode::kUniform;
  CurveMode curve = CurveMode::kGilbert3d;

  /// Throws a validation Error on inconsistent fields.
  void validate() const;

  float effective_scale(std::size_t head_dim) const {
    return static_cast<float>(scale > 0.0 ? scale : 1.0 / std::sqrt(double(head_dim)));
  }
};

inline std::size_t num_blocks(std::size_t n, std::size_t block) { return (n + block - 1) / block; }

}  // namespace asablade
