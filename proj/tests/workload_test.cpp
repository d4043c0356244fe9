// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "asablade/error.hpp"
#include "asablade/workload.hpp"

namespace asablade {
namespace {

double neighbour_correlation(const Tensor& x, const TokenGrid& g) {
  // Correlation between horizontally adjacent tokens, pooled over channels.
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.coords(i)[2] + 1 == g.w) continue;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      num += double(x(i, c)) * x(i + 1, c);
      den += double(x(i, c)) * x(i, c);
    }
  }
  return num / den;
}

WorkloadSpec small_spec(std::uint64_t seed) {
  WorkloadSpec s;
  s.grid = {2, 8, 8};
  s.d = 16;
  s.seed = seed;
  return s;
}

AttnConfig small_cfg() {
  AttnConfig c;
  c.block = 16;
  c.samples = 4;
  return c;
}

TEST(Workload, ParsesNames) {
  EXPECT_EQ(parse_structure("block_motif"), Structure::kBlockMotif);
  EXPECT_EQ(structure_name(Structure::kAdversarialSpike), "adversarial_spike");
  EXPECT_EQ(parse_variant("asa_gt"), Variant::kAsaGt);
  EXPECT_EQ(variant_name(Variant::kStaticWindow), "static_window");
  EXPECT_THROW(parse_structure("noise"), Error);
  EXPECT_THROW(parse_variant("sta"), Error);
}

TEST(Workload, SmoothFieldIsStandardizedAndCorrelated) {
  const TokenGrid g{2, 16, 16};
  const Tensor a = smooth_field(g, 8, 3.0, RngStream(1));
  for (std::size_t c = 0; c < 8; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) m += a(i, c);
    m /= double(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) v += (a(i, c) - m) * (a(i, c) - m);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v / double(g.size()), 1.0, 1e-4);
  }
  const Tensor white = smooth_field(g, 8, 0.0, RngStream(1));
  EXPECT_GT(neighbour_correlation(a, g), 0.8);
  EXPECT_LT(std::abs(neighbour_correlation(white, g)), 0.1);
  const Tensor flat = smooth_field(g, 4, INFINITY, RngStream(1));
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_EQ(flat(i, 2), flat(0, 2));
}

TEST(Workload, GenerationIsSeedDeterministic) {
  const Workload a = generate_workload(small_spec(3)), b = generate_workload(small_spec(3));
  const Workload c = generate_workload(small_spec(4));
  EXPECT_EQ(a.q, b.q);
  EXPECT_EQ(a.v, b.v);
  EXPECT_NE(a.k, c.k);
}

TEST(Workload, UniformStructureHasEqualLogits) {
  WorkloadSpec s = small_spec(1);
  s.structure = Structure::kUniform;
  const Workload w = generate_workload(s);
  const Tensor logits = matmul_transposed(w.q, w.k);
  for (float x : logits.values()) EXPECT_FLOAT_EQ(x, logits.values()[0]);
}

TEST(Workload, BlockMotifSharesKeysInsideCubes) {
  WorkloadSpec s = small_spec(1);
  s.structure = Structure::kBlockMotif;
  s.corr_length = 4.0;
  const Workload w = generate_workload(s);
  // Tokens (0,0,0) and (1,1,1) share a cube; (0,0,0) and (0,0,4) do not.
  const std::size_t a = 0, same = 1 * 64 + 1 * 8 + 1, other = 4;
  double d_same = 0.0, d_other = 0.0;
  for (std::size_t c = 0; c < s.d; ++c) {
    d_same += std::pow(w.k(a, c) - w.k(same, c), 2);
    d_other += std::pow(w.k(a, c) - w.k(other, c), 2);
  }
  EXPECT_LT(d_same * 4, d_other);
}

TEST(Workload, SpikeKeysDominateAttention) {
  WorkloadSpec s = small_spec(2);
  s.structure = Structure::kAdversarialSpike;
  const Workload w = generate_workload(s);
  AttnConfig cfg = small_cfg();
  cfg.block = 1;
  cfg.samples = 1;
  const Tensor p = row_softmax(matmul_transposed(w.q, w.k, cfg.effective_scale(s.d)));
  double top = 0.0;
  for (std::size_t j = 0; j < p.cols(); ++j) top = std::max(top, double(p(0, j)));
  EXPECT_GT(top, 5.0 / double(p.cols()));
}

TEST(Pipeline, DenseVariantIsExactAndFlopsTrackSparsity) {
  const auto reports = run_pipeline(small_spec(5), small_cfg(),
                                    {Variant::kDense, Variant::kAsa, Variant::kStaticWindow});
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_EQ(reports[0].rel_error, 0.0);
  EXPECT_TRUE(std::isinf(reports[0].psnr));
  for (const auto& r : reports) {
    EXPECT_NEAR(r.flops_ratio, 1.0 - r.sparsity, 0.05 * (1.0 - r.sparsity));
    EXPECT_EQ(r.out.rows(), small_spec(5).grid.size());
  }
  EXPECT_GT(reports[1].flops_probe, 0u);
  EXPECT_EQ(reports[2].flops_probe, 0u);
}

TEST(Pipeline, RelativeErrorNonIncreasingInTau) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    double prev = INFINITY;
    for (double tau : {0.3, 0.5, 0.7, 0.9, 0.99, 1.0}) {
      AttnConfig cfg = small_cfg();
      cfg.tau = tau;
      const auto r = run_pipeline(small_spec(seed), cfg, {Variant::kAsa});
      EXPECT_LE(r[0].rel_error, prev + 1e-6) << "seed " << seed << " tau " << tau;
      prev = r[0].rel_error;
    }
  }
}

TEST(Pipeline, TargetSparsityAndWindowMatching) {
  WorkloadSpec s;
  s.grid = {4, 16, 16};
  s.seed = 1;
  AttnConfig cfg;
  cfg.block = 32;
  cfg.samples = 8;
  PipelineOptions opts;
  opts.target_sparsity = 0.75;
  const auto r = run_pipeline(s, cfg, {Variant::kAsa, Variant::kStaticWindow}, opts);
  EXPECT_NEAR(r[0].sparsity, 0.75, 0.02);
  EXPECT_NEAR(r[1].sparsity, 0.75, 0.03);
  EXPECT_LT(r[0].rel_error, r[1].rel_error);
  EXPECT_GT(r[0].mask_overlap, 0.5);
}

TEST(Pipeline, GlobalTokensDefaultToBlockWindow) {
  const auto r = run_pipeline(small_spec(6), small_cfg(), {Variant::kAsa, Variant::kAsaGt});
  EXPECT_EQ(r[1].cfg.pool_n, small_cfg().block);
  EXPECT_NE(r[0].rel_error, r[1].rel_error);
}

TEST(Pipeline, RejectsMismatchedTokens) {
  Workload w = generate_workload(small_spec(1));
  WorkloadSpec other = small_spec(1);
  other.grid = {1, 8, 8};
  EXPECT_THROW(run_pipeline(w, other, small_cfg(), {Variant::kAsa}), Error);
  EXPECT_THROW(run_pipeline(small_spec(1), small_cfg(), {}), Error);
}

TEST(Sweep, WritesOrderedCsv) {
  const auto path = std::filesystem::temp_directory_path() / "asab_sweep_test.csv";
  const auto reports = sweep(small_spec(1), small_cfg(), {0.5, 0.9},
                             {Variant::kAsa, Variant::kStaticWindow}, path.string(), 3);
  ASSERT_EQ(reports.size(), 4u);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kSweepHeader);
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].rfind("0.5,asa,", 0), 0u);
  EXPECT_EQ(rows[3].rfind("0.9,static_window,", 0), 0u);
  EXPECT_EQ(rows[2], sweep_csv_row(reports[2]));
  std::filesystem::remove(path);
}

TEST(Sweep, SerialAndParallelAgree) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = sweep(small_spec(2), small_cfg(), {0.6, 0.8, 0.95}, {Variant::kAsa},
                       (dir / "asab_s1.csv").string(), 1);
  const auto b = sweep(small_spec(2), small_cfg(), {0.6, 0.8, 0.95}, {Variant::kAsa},
                       (dir / "asab_s4.csv").string(), 4);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].out, b[i].out);
  std::filesystem::remove(dir / "asab_s1.csv");
  std::filesystem::remove(dir / "asab_s4.csv");
}

TEST(Sweep, UnwritablePathIsIoError) {
  try {
    sweep(small_spec(1), small_cfg(), {0.9}, {Variant::kAsa}, "/nonexistent/dir/x.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

}  // namespace
}  // namespace asablade
