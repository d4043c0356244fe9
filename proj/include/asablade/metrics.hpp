// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "asablade/tensor.hpp"

namespace asablade {

/// 10*log10(peak^2 / MSE). Identical inputs give +infinity.
double psnr(const Tensor& a, const Tensor& b, double peak);

/// Mean SSIM over all 8x8 windows (stride 1) of two H x W images, with
/// C1 = (0.01 peak)^2 and C2 = (0.03 peak)^2. Images smaller than 8 along an
/// axis use a single window spanning that axis.
double ssim(const Tensor& a, const Tensor& b, double peak);

/// ||a - b|| / ||b|| in the Frobenius norm; 0 when both are zero.
double relative_error(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace asablade
