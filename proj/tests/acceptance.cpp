// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "asablade/gilbert.hpp"
#include "asablade/maskgen.hpp"
#include "asablade/prober.hpp"
#include "asablade/sparse_attn.hpp"
#include "asablade/tdm.hpp"
#include "asablade/theory.hpp"
#include "asablade/workload.hpp"
#include "test_util.hpp"

namespace asablade {
namespace {

using Clock = std::chrono::steady_clock;
using testing::random_tensor;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome rank_law() {
  const auto t0 = Clock::now();
  const auto r = theory::rank_law_report(16384, 256, 100000, RngStream(2026));
  const double secs = seconds_since(t0);
  const double mean_err = std::abs(r.empirical_mean - 63.74) / 63.74;
  const double var_err = std::abs(r.empirical_var - 3970.0) / 3970.0;
  return {mean_err <= 0.02 && var_err <= 0.10 && secs < 10.0,
          fmt("mean %.3f (rel %.4f <= 0.02), var %.1f (rel %.4f <= 0.10), %.2fs < 10s",
              r.empirical_mean, mean_err, r.empirical_var, var_err, secs)};
}

Outcome exhaustive_probe() {
  std::mt19937_64 gen(11);
  double worst = 0.0;
  int identical = 0;
  const int configs = 50;
  for (int c = 0; c < configs; ++c) {
    const std::size_t n = 2 + gen() % 511, d = 1 + gen() % 64;
    AttnConfig cfg;
    cfg.block = 1 + gen() % std::min<std::size_t>(n, 128);
    cfg.samples = cfg.block;
    cfg.tau = 0.5 + 0.5 * std::uniform_real_distribution<double>()(gen);
    const Tensor q = random_tensor(n, d, gen), k = random_tensor(n, d, gen);
    const ImportanceMap probe = probe_importance(q, k, cfg, RngStream(c));
    const ImportanceMap full = dense_importance_map(q, k, cfg);
    for (std::size_t i = 0; i < probe.values.size(); ++i)
      worst = std::max(worst, double(std::abs(probe.values.values()[i] - full.values.values()[i])));
    identical += threshold_mask(probe, cfg) == threshold_mask(full, cfg);
  }
  return {worst <= 1e-6 && identical == configs,
          fmt("%d configs, N <= 512: max |diff| %.2e <= 1e-6, identical masks %d/%d", configs,
              worst, identical, configs)};
}

Outcome uniform_proportionality() {
  std::mt19937_64 gen(12);
  AttnConfig cfg;
  cfg.block = 128;
  cfg.samples = 16;
  double worst = 0.0;
  bool masks = true;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 128 * (2 + trial), d = 32;
    const Tensor row = random_tensor(1, d, gen), krow = random_tensor(1, d, gen);
    Tensor q({n, d}), k({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        q(i, j) = row(0, j);
        k(i, j) = krow(0, j);
      }
    const RngStream rng(trial);
    const ImportanceMap sparse = probe_importance(q, k, cfg, rng);
    const ImportanceMap full = dense_importance_map(q, k, cfg);
    for (std::size_t i = 0; i < sparse.values.size(); ++i)
      worst = std::max(worst, std::abs(double(sparse.values.values()[i]) -
                                       8.0 * double(full.values.values()[i])));
    masks = masks && threshold_mask(sparse, cfg) == threshold_mask(full, cfg);
    const auto rep = theory::proportionality_check(q, k, cfg, rng);
    masks = masks && rep.masks_identical && rep.normalized_max_abs_diff <= 1e-6;
  }
  return {worst <= 1e-6 && masks,
          fmt("b=128 k=16: max |P_sparse - 8 P_full| %.2e <= 1e-6, row-normalized masks %s",
              worst, masks ? "identical" : "differ")};
}

BlockMask nonempty_mask(std::size_t nb, std::mt19937_64& gen) {
  BlockMask m = testing::random_mask(nb, 0.35, gen);
  for (std::size_t i = 0; i < nb; ++i) m.set(i, gen() % nb, true);
  return m;
}

Outcome executor_oracles() {
  std::mt19937_64 gen(13);
  double worst_sparse = 0.0, worst_gt = 0.0, worst_full = 0.0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = 1 + gen() % 160, d = 1 + gen() % 32, dv = 1 + gen() % 16;
    AttnConfig cfg;
    cfg.block = 1 + gen() % 32;
    cfg.pool_n = 1 + gen() % 16;
    const std::size_t nb = num_blocks(n, cfg.block);
    const Tensor q = random_tensor(n, d, gen), k = random_tensor(n, d, gen, 1.5),
                 v = random_tensor(n, dv, gen);
    const BlockMask mask = nonempty_mask(nb, gen);
    const double scale = 1.0 / std::sqrt(double(d));
    worst_sparse = std::max(
        worst_sparse, testing::max_abs_diff(sparse_attention(q, k, v, mask, cfg).out,
                                            testing::naive_masked_attention(q, k, v, mask,
                                                                            cfg.block, scale)));
    worst_gt = std::max(worst_gt, testing::max_abs_diff(
                                      sparse_attention_gt(q, k, v, mask, cfg).out,
                                      testing::naive_gt(q, k, v, mask, cfg.block, cfg.pool_n,
                                                        scale)));
    const Tensor dense = dense_attention(q, k, v, float(scale));
    const Tensor full = sparse_attention(q, k, v, BlockMask::full(nb, nb), cfg).out;
    for (std::size_t i = 0; i < dense.size(); ++i)
      worst_full = std::max(worst_full, double(std::abs(full.values()[i] - dense.values()[i])));
  }
  const bool ok = worst_sparse <= 1e-5 && worst_gt <= 1e-5 && worst_full <= 1e-5;
  return {ok, fmt("%d trials: sparse %.2e, gt %.2e, all-ones vs dense %.2e (each <= 1e-5)",
                  trials, worst_sparse, worst_gt, worst_full)};
}

Outcome global_token_identity() {
  std::mt19937_64 gen(14);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 16 + gen() % 240, d = 4 + gen() % 60;
    AttnConfig cfg;
    cfg.block = 1 + gen() % 64;
    cfg.pool_n = 1;
    const std::size_t nb = num_blocks(n, cfg.block);
    const Tensor q = random_tensor(n, d, gen), k = random_tensor(n, d, gen),
                 v = random_tensor(n, d, gen);
    const Tensor got = sparse_attention_gt(q, k, v, BlockMask::full(nb, nb), cfg).out;
    const Tensor dense = dense_attention(q, k, v, cfg.effective_scale(d));
    for (std::size_t i = 0; i < dense.size(); ++i)
      worst = std::max(worst, double(std::abs(got.values()[i] - dense.values()[i])));
  }
  return {worst <= 1e-6, fmt("pool_n=1, full mask: max |diff| vs dense %.2e <= 1e-6", worst)};
}

Outcome mask_properties() {
  std::mt19937_64 gen(15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int scale_ok = 0, mono_ok = 0;
  const int rows = 1000;
  for (int r = 0; r < rows; ++r) {
    const std::size_t n = 1 + gen() % 64;
    Tensor row({1, n}), scaled({1, n});
    const double c = std::exp(std::log(1e-3) + u(gen) * std::log(1e6));
    for (std::size_t j = 0; j < n; ++j) {
      row(0, j) = float(std::pow(u(gen), 3.0));
      scaled(0, j) = float(double(row(0, j)) * c);
    }
    AttnConfig cfg;
    cfg.tau = 0.05 + 0.95 * u(gen);
    cfg.min_keep = 0.0;
    scale_ok += threshold_mask({row}, cfg) == threshold_mask({scaled}, cfg);

    AttnConfig lo = cfg, hi = cfg;
    const double a = 0.01 + 0.99 * u(gen), b = 0.01 + 0.99 * u(gen);
    lo.tau = std::min(a, b);
    hi.tau = std::max(a, b);
    const BlockMask ml = threshold_mask({row}, lo), mh = threshold_mask({row}, hi);
    bool subset = true;
    for (std::size_t j = 0; j < n; ++j) subset = subset && (!ml.kept(0, j) || mh.kept(0, j));
    mono_ok += subset;
  }
  return {scale_ok == rows && mono_ok == rows,
          fmt("scale-invariant %d/%d rows, tau-monotone %d/%d rows", scale_ok, rows, mono_ok,
              rows)};
}

Outcome gilbert_correctness() {
  std::size_t grids = 0, bijections = 0, adjacent = 0, planar = 0;
  for (std::size_t t = 1; t <= 32; ++t)
    for (std::size_t h = 1; h <= 32; ++h)
      for (std::size_t w = 1; w <= 32; ++w) {
        const TokenGrid g{t, h, w};
        const bool is_planar = t == 1 || h == 1 || w == 1;
        ++grids;
        const Permutation p = gilbert_order(g);
        std::vector<bool> seen(g.size(), false);
        bool ok = p.size() == g.size();
        for (std::size_t x : p.forward()) {
          ok = ok && x < g.size() && !seen[x];
          if (x < g.size()) seen[x] = true;
        }
        bijections += ok;
        if (!is_planar) continue;
        ++planar;
        bool adj = true;
        for (std::size_t i = 1; i < g.size(); ++i) {
          const auto a = g.coords(p.forward()[i - 1]), b = g.coords(p.forward()[i]);
          std::size_t dist = 0;
          for (int c = 0; c < 3; ++c) dist += a[c] > b[c] ? a[c] - b[c] : b[c] - a[c];
          adj = adj && dist == 1;
        }
        adjacent += adj;
      }
  std::mt19937_64 gen(16);
  const TokenGrid g{5, 13, 32};
  const Tensor x = random_tensor(g.size(), 7, gen);
  const Tensor back = undo_permutation(apply_permutation(x, gilbert_order(g)), gilbert_order(g));
  const bool exact = back == x;
  return {bijections == grids && adjacent == planar && exact,
          fmt("bijective %zu/%zu grids, planar adjacency %zu/%zu, round trip %s", bijections,
              grids, adjacent, planar, exact ? "bit-exact" : "differs")};
}

Outcome quality_direction() {
  const int seeds = 20;
  double asa_err = 0.0, win_err = 0.0, asa_psnr = 0.0, win_psnr = 0.0, asa_sp = 0.0,
         win_sp = 0.0;
  for (int s = 0; s < seeds; ++s) {
    WorkloadSpec spec;
    spec.grid = {4, 16, 16};
    spec.d = 32;
    spec.structure = Structure::kSmoothField;
    spec.seed = std::uint64_t(s);
    AttnConfig cfg;
    cfg.block = 32;
    cfg.samples = 8;
    PipelineOptions opts;
    opts.target_sparsity = 0.75;
    const auto r = run_pipeline(spec, cfg, {Variant::kAsa, Variant::kStaticWindow}, opts);
    asa_err += r[0].rel_error / seeds;
    win_err += r[1].rel_error / seeds;
    asa_psnr += r[0].psnr / seeds;
    win_psnr += r[1].psnr / seeds;
    asa_sp += r[0].sparsity / seeds;
    win_sp += r[1].sparsity / seeds;
  }
  return {asa_err < win_err,
          fmt("20 seeds: rel_error asa %.4f < static_window %.4f; sparsity %.3f vs %.3f; "
              "PSNR %.2f vs %.2f dB",
              asa_err, win_err, asa_sp, win_sp, asa_psnr, win_psnr)};
}

Outcome tdm_convergence() {
  const auto t0 = Clock::now();
  const auto teacher = tdm::GaussianMixtureTeacher::parse("gauss:3,0.5", 1);
  const auto sched = tdm::Schedule::uniform(tdm::ScheduleKind::kRectifiedFlow, 1);
  tdm::AffineStudent student(1, 1);
  tdm::DistillConfig cfg;
  cfg.iters = 2000;
  cfg.seed = 2026;
  const auto r = tdm::distill(teacher, student, sched, cfg);
  const double secs = seconds_since(t0);
  if (r.diverged) return {false, "diverged"};
  const double m = r.sample_mean[0], s = r.sample_std[0];
  const double me = std::abs(m - 3.0) / 3.0, se = std::abs(s - 0.5) / 0.5;
  return {me <= 0.05 && se <= 0.10 && secs < 60.0,
          fmt("mean %.4f (rel %.4f <= 0.05), std %.4f (rel %.4f <= 0.10), %.1fs < 60s", m, me,
              s, se, secs)};
}

Outcome attention_gradients() {
  const tdm::AttnShape shape{8, 2, 2, 0.0};
  AttnConfig mask_cfg;
  mask_cfg.tau = 0.7;
  mask_cfg.min_keep = 0.0;
  std::mt19937_64 gen(17);
  std::normal_distribution<double> nd;
  const int pairs = 12;
  std::size_t checked = 0, passed = 0;
  double worst = 0.0;
  std::size_t sparse_masks = 0;
  for (int p = 0; p < pairs; ++p) {
    std::vector<double> theta(shape.num_params()), z(shape.dim()), gy(shape.dim());
    for (auto& x : theta) x = nd(gen);
    for (auto& x : z) x = nd(gen);
    for (auto& x : gy) x = nd(gen);
    const BlockMask mask = tdm::attention_student_mask(shape, theta, z, mask_cfg);
    sparse_masks += mask.sparsity() > 0.0;
    const auto cache = tdm::masked_attention_forward(shape, theta, z, mask);
    const auto grad = tdm::masked_attention_backward(shape, theta, z, mask, cache, gy);
    auto objective = [&](const std::vector<double>& th) {
      const auto c = tdm::masked_attention_forward(shape, th, z, mask);
      double s = 0.0;
      for (std::size_t i = 0; i < gy.size(); ++i) s += gy[i] * c.y[i];
      return s;
    };
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
      auto tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (objective(tp) - objective(tm)) / (2 * h);
      const double g = grad.theta[i];
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
      ++checked;
      passed += rel <= 1e-4;
    }
  }
  return {passed == checked && pairs >= 10,
          fmt("%d (input, mask) pairs (%zu with pruned blocks), %zu/%zu parameters within "
              "1e-4 relative, worst %.2e",
              pairs, sparse_masks, passed, checked, worst)};
}

Outcome probe_cost() {
  std::mt19937_64 gen(18);
  const std::size_t n = 4096, d = 64;
  const Tensor q = random_tensor(n, d, gen), k = random_tensor(n, d, gen);
  bool ok = true;
  std::string detail;
  for (auto [b, kk] : {std::pair<std::size_t, std::size_t>{128, 16}, {64, 8}, {32, 8}}) {
    AttnConfig cfg;
    cfg.block = b;
    cfg.samples = kk;
    FlopCounter fp, fd;
    probe_importance(q, k, cfg, RngStream(1), &fp);
    dense_importance_map(q, k, cfg, &fd);
    const double ratio = double(fp.total()) / double(fd.total());
    const double bound = 1.1 * std::pow(double(kk) / double(b), 2);
    ok = ok && ratio <= bound;
    detail += fmt("(%zu,%zu) %.5f <= %.5f; ", b, kk, ratio, bound);
  }
  detail.resize(detail.size() - 2);
  return {ok, "N=4096 d=64: " + detail};
}

}  // namespace
}  // namespace asablade

int main() {
  using namespace asablade;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"order-statistics law", rank_law},
      {"exhaustive-probe identity", exhaustive_probe},
      {"uniform-logit proportionality", uniform_proportionality},
      {"sparse-executor oracle equivalence", executor_oracles},
      {"global-token identity", global_token_identity},
      {"mask scale-invariance and tau-monotonicity", mask_properties},
      {"gilbert correctness", gilbert_correctness},
      {"quality direction vs static window", quality_direction},
      {"tdm toy convergence", tdm_convergence},
      {"attention student gradients", attention_gradients},
      {"probe cost bound", probe_cost},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
