// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "asablade/maskgen.hpp"
#include "asablade/tensor.hpp"

namespace asablade::testing {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& gen,
                            double stddev = 1.0) {
  std::normal_distribution<double> nd(0.0, stddev);
  Tensor t({rows, cols});
  for (float& x : t.values()) x = static_cast<float>(nd(gen));
  return t;
}

inline BlockMask random_mask(std::size_t nb, double keep, std::mt19937_64& gen) {
  std::bernoulli_distribution bd(keep);
  BlockMask m(nb, nb);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) m.set(i, j, bd(gen));
  return m;
}

// Textbook double-precision masked attention; masked logits drop out of the
// softmax entirely. Rows with nothing kept produce zeros.
inline std::vector<double> naive_masked_attention(const Tensor& q, const Tensor& k,
                                                  const Tensor& v, const BlockMask& mask,
                                                  std::size_t block, double scale) {
  const std::size_t n = q.rows(), m = k.rows(), d = q.cols(), dv = v.cols();
  std::vector<double> out(n * dv, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(m, -INFINITY);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < m; ++j) {
      if (!mask.kept(i / block, j / block)) continue;
      double acc = 0.0;
      for (std::size_t e = 0; e < d; ++e) acc += double(q(i, e)) * double(k(j, e));
      s[j] = acc * scale;
      mx = std::max(mx, s[j]);
    }
    if (mx == -INFINITY) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::isinf(s[j]) ? 0.0 : std::exp(s[j] - mx);
    for (std::size_t j = 0; j < m; ++j) {
      if (std::isinf(s[j])) continue;
      const double p = std::exp(s[j] - mx) / z;
      for (std::size_t e = 0; e < dv; ++e) out[i * dv + e] += p * double(v(j, e));
    }
  }
  return out;
}

// Global-token reference built from scratch: each query attends to its kept
// keys plus every pooled window, the pooled logit carrying ln(window size).
inline std::vector<double> naive_gt(const Tensor& q, const Tensor& k, const Tensor& v,
                                    const BlockMask& mask, std::size_t b, std::size_t n,
                                    double scale) {
  const std::size_t nq = q.rows(), m = k.rows(), d = q.cols(), dv = v.cols();
  const std::size_t windows = (m + n - 1) / n;
  std::vector<double> out(nq * dv, 0.0);
  for (std::size_t i = 0; i < nq; ++i) {
    std::vector<double> logit;
    std::vector<std::vector<double>> val;
    for (std::size_t j = 0; j < m; ++j) {
      if (!mask.kept(i / b, j / b)) continue;
      double s = 0.0;
      for (std::size_t e = 0; e < d; ++e) s += double(q(i, e)) * double(k(j, e));
      logit.push_back(s * scale);
      std::vector<double> row(dv);
      for (std::size_t e = 0; e < dv; ++e) row[e] = v(j, e);
      val.push_back(row);
    }
    for (std::size_t w = 0; w < windows; ++w) {
      const std::size_t lo = w * n, hi = std::min(m, lo + n), sz = hi - lo;
      std::vector<double> kp(d, 0.0), vp(dv, 0.0);
      for (std::size_t j = lo; j < hi; ++j) {
        for (std::size_t e = 0; e < d; ++e) kp[e] += double(k(j, e)) / double(sz);
        for (std::size_t e = 0; e < dv; ++e) vp[e] += double(v(j, e)) / double(sz);
      }
      double s = 0.0;
      for (std::size_t e = 0; e < d; ++e) s += double(q(i, e)) * kp[e];
      logit.push_back(s * scale + std::log(double(sz)));
      val.push_back(vp);
    }
    double mx = -INFINITY, z = 0.0;
    for (double s : logit) mx = std::max(mx, s);
    for (double s : logit) z += std::exp(s - mx);
    for (std::size_t t = 0; t < logit.size(); ++t)
      for (std::size_t e = 0; e < dv; ++e)
        out[i * dv + e] += std::exp(logit[t] - mx) / z * val[t][e];
  }
  return out;
}

inline double max_abs_diff(const Tensor& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    m = std::max(m, std::abs(double(a.values()[i]) - b[i]));
  return m;
}

}  // namespace asablade::testing
