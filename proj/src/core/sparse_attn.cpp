// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/sparse_attn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "asablade/error.hpp"

namespace asablade {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_inputs(const Tensor& q, const Tensor& k, const Tensor& v, const BlockMask& mask,
                  const AttnConfig& cfg) {
  require(cfg.block >= 1, "attention: block size must be >= 1");
  require(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, "attention: q, k, v must be rank 2");
  require(q.cols() == k.cols(), "attention: q and k head dims differ");
  require(k.rows() == v.rows(), "attention: k and v lengths differ");
  const std::size_t nbq = num_blocks(q.rows(), cfg.block), nbk = num_blocks(k.rows(), cfg.block);
  require(mask.rows() == nbq && mask.cols() == nbk,
          "attention: mask is " + std::to_string(mask.rows()) + "x" +
              std::to_string(mask.cols()) + ", expected " + std::to_string(nbq) + "x" +
              std::to_string(nbk));
  for (std::size_t i = 0; i < nbq; ++i)
    require(mask.kept_in_row(i) > 0,
            "attention: mask row " + std::to_string(i) + " keeps no blocks");
}

/// Running state of one query row's online softmax.
struct OnlineRow {
  double max = kNegInf;
  double sum = 0.0;
  std::vector<double> acc;
  std::vector<double> logits;

  explicit OnlineRow(std::size_t dv) : acc(dv, 0.0) {}

  // Folds keys [lo, hi) of (keys, values) into the row; `bias` is added to
  // every logit of the segment.
  void fold(std::span<const float> qrow, const Tensor& keys, const Tensor& values,
            std::size_t lo, std::size_t hi, float scale, double bias, FlopCounter& f) {
    const std::size_t d = qrow.size(), dv = acc.size(), n = hi - lo;
    logits.resize(n);
    double seg_max = kNegInf;
    for (std::size_t t = lo; t < hi; ++t) {
      const auto kt = keys.row(t);
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(qrow[c]) * kt[c];
      logits[t - lo] = dot * scale + bias;
      seg_max = std::max(seg_max, logits[t - lo]);
    }
    const double new_max = std::max(max, seg_max);
    const double correction = std::exp(max - new_max);
    sum *= correction;
    for (auto& a : acc) a *= correction;
    for (std::size_t t = lo; t < hi; ++t) {
      const double w = std::exp(logits[t - lo] - new_max);
      sum += w;
      const auto vt = values.row(t);
      for (std::size_t c = 0; c < dv; ++c) acc[c] += w * vt[c];
    }
    max = new_max;

    f.mults += n * (d + 1) + 1 + dv + n * dv;
    f.adds += n * (d - 1) + n + n * dv + (bias != 0.0 ? n : 0);
    f.exps += n + 1;
  }

  void write(std::span<float> out, FlopCounter& f) const {
    for (std::size_t c = 0; c < acc.size(); ++c) out[c] = static_cast<float>(acc[c] / sum);
    f.mults += acc.size();
  }
};

AttnOutput run_blocks(const Tensor& q, const Tensor& k, const Tensor& v, const BlockMask& mask,
                      const AttnConfig& cfg, const Tensor* pooled_k, const Tensor* pooled_v,
                      const std::vector<double>* pooled_bias) {
  const std::size_t b = cfg.block, nbk = mask.cols();
  const float scale = cfg.effective_scale(q.cols());
  AttnOutput res;
  res.out = Tensor::zeros(q.rows(), v.cols());
  OnlineRow row(v.cols());
  std::size_t processed_pairs = 0;

  for (std::size_t qi = 0; qi < q.rows(); ++qi) {
    const std::size_t qb = qi / b;
    row = OnlineRow(v.cols());
    const auto qrow = q.row(qi);
    for (std::size_t kb = 0; kb < nbk; ++kb) {
      if (!mask.kept(qb, kb)) continue;
      row.fold(qrow, k, v, kb * b, std::min(k.rows(), (kb + 1) * b), scale, 0.0, res.flops);
    }
    if (pooled_k) {
      // Windows differ in size only at the tail, so fold by equal-bias runs.
      std::size_t lo = 0;
      while (lo < pooled_k->rows()) {
        std::size_t hi = lo + 1;
        while (hi < pooled_k->rows() && (*pooled_bias)[hi] == (*pooled_bias)[lo]) ++hi;
        row.fold(qrow, *pooled_k, *pooled_v, lo, hi, scale, (*pooled_bias)[lo], res.flops);
        lo = hi;
      }
    }
    row.write(res.out.row(qi), res.flops);
  }
  for (std::size_t i = 0; i < mask.rows(); ++i) processed_pairs += mask.kept_in_row(i);
  res.effective_sparsity =
      1.0 - static_cast<double>(processed_pairs) / static_cast<double>(mask.rows() * mask.cols());
  res.out.check_finite("sparse_attention output");
  return res;
}

std::vector<double> pooled_biases(std::size_t keys, std::size_t n) {
  std::vector<double> bias;
  for (std::size_t lo = 0; lo < keys; lo += n)
    bias.push_back(std::log(static_cast<double>(std::min(n, keys - lo))));
  return bias;
}

Tensor softmax_rows_times_v(const std::vector<std::vector<double>>& logits, const Tensor& v) {
  Tensor out = Tensor::zeros(logits.size(), v.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& row = logits[i];
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double s : row) sum += std::exp(s - mx);
    std::vector<double> acc(v.cols(), 0.0);
    for (std::size_t t = 0; t < row.size(); ++t) {
      const double p = std::exp(row[t] - mx) / sum;
      if (p == 0.0) continue;
      for (std::size_t c = 0; c < v.cols(); ++c) acc[c] += p * v(t, c);
    }
    for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) = static_cast<float>(acc[c]);
  }
  return out;
}

}  // namespace

AttnOutput sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const BlockMask& mask, const AttnConfig& cfg) {
  check_inputs(q, k, v, mask, cfg);
  return run_blocks(q, k, v, mask, cfg, nullptr, nullptr, nullptr);
}

AttnOutput sparse_attention_gt(const Tensor& q, const Tensor& k, const Tensor& v,
                               const BlockMask& mask, const AttnConfig& cfg) {
  if (cfg.pool_n == 0) return sparse_attention(q, k, v, mask, cfg);
  check_inputs(q, k, v, mask, cfg);
  const Tensor pk = mean_pool_rows(k, cfg.pool_n);
  const Tensor pv = mean_pool_rows(v, cfg.pool_n);
  const std::vector<double> bias = pooled_biases(k.rows(), cfg.pool_n);
  return run_blocks(q, k, v, mask, cfg, &pk, &pv, &bias);
}

Tensor dense_masked_oracle(const Tensor& q, const Tensor& k, const Tensor& v,
                           const BlockMask& mask, const AttnConfig& cfg) {
  check_inputs(q, k, v, mask, cfg);
  const double scale = cfg.effective_scale(q.cols());
  std::vector<std::vector<double>> logits(q.rows(), std::vector<double>(k.rows()));
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t t = 0; t < k.rows(); ++t) {
      if (!mask.kept(i / cfg.block, t / cfg.block)) {
        logits[i][t] = kNegInf;
        continue;
      }
      double dot = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) dot += static_cast<double>(q(i, c)) * k(t, c);
      logits[i][t] = dot * scale;
    }
  }
  return softmax_rows_times_v(logits, v);
}

Tensor dense_gt_oracle(const Tensor& q, const Tensor& k, const Tensor& v,
                       const BlockMask& mask, const AttnConfig& cfg) {
  if (cfg.pool_n == 0) return dense_masked_oracle(q, k, v, mask, cfg);
  check_inputs(q, k, v, mask, cfg);
  const Tensor pk = mean_pool_rows(k, cfg.pool_n);
  const Tensor pv = mean_pool_rows(v, cfg.pool_n);
  const std::size_t keys = k.rows(), aug = keys + pk.rows(), d = k.cols();

  Tensor k_aug = Tensor::zeros(aug, d);
  Tensor v_aug = Tensor::zeros(aug, v.cols());
  for (std::size_t t = 0; t < aug; ++t) {
    const auto ks = t < keys ? k.row(t) : pk.row(t - keys);
    const auto vs = t < keys ? v.row(t) : pv.row(t - keys);
    std::copy(ks.begin(), ks.end(), k_aug.row(t).begin());
    std::copy(vs.begin(), vs.end(), v_aug.row(t).begin());
  }

  const double scale = cfg.effective_scale(d);
  std::vector<std::vector<double>> logits(q.rows(), std::vector<double>(aug));
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t t = 0; t < aug; ++t) {
      double bias = 0.0;
      if (t < keys) {
        if (!mask.kept(i / cfg.block, t / cfg.block)) bias = kNegInf;
      } else {
        const std::size_t lo = (t - keys) * cfg.pool_n;
        bias = std::log(static_cast<double>(std::min(cfg.pool_n, keys - lo)));
      }
      if (bias == kNegInf) {
        logits[i][t] = kNegInf;
        continue;
      }
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(q(i, c)) * k_aug(t, c);
      logits[i][t] = dot * scale + bias;
    }
  }
  return softmax_rows_times_v(logits, v_aug);
}

BiasCompensation bias_compensation_check(std::size_t n, double logit) {
  require(n >= 1, "bias compensation window must be >= 1");
  BiasCompensation r;
  r.n = n;
  r.logit = logit;
  r.biased_weight = std::exp(logit + std::log(static_cast<double>(n)));
  r.constituent_weight = static_cast<double>(n) * std::exp(logit);
  r.consistent = std::abs(r.biased_weight - r.constituent_weight) <=
                 1e-6 * std::max(1.0, std::abs(r.constituent_weight));
  return r;
}

}  // namespace asablade
