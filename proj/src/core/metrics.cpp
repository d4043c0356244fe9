// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asablade/error.hpp"

namespace asablade {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                      " vs " + shape_string(b.shape()));
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a, b, "psnr");
  require(peak > 0.0, "psnr: peak must be positive");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.values()[i]) - b.values()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a, b, "ssim");
  require(a.rank() == 2, "ssim expects H x W images");
  require(peak > 0.0, "ssim: peak must be positive");
  const std::size_t h = a.rows(), w = a.cols();
  const std::size_t wh = std::min<std::size_t>(8, h), ww = std::min<std::size_t>(8, w);
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const double count = static_cast<double>(wh * ww);

  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t y0 = 0; y0 + wh <= h; ++y0) {
    for (std::size_t x0 = 0; x0 + ww <= w; ++x0) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t y = y0; y < y0 + wh; ++y) {
        for (std::size_t x = x0; x < x0 + ww; ++x) {
          const double va = a(y, x), vb = b(y, x);
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      }
      const double ma = sa / count, mb = sb / count;
      const double var_a = std::max(0.0, saa / count - ma * ma);
      const double var_b = std::max(0.0, sbb / count - mb * mb);
      const double cov = sab / count - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double relative_error(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "relative_error");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.values()[i]) - b.values()[i];
    num += d * d;
    den += static_cast<double>(b.values()[i]) * b.values()[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.values()[i]) - b.values()[i]));
  return m;
}

}  // namespace asablade
