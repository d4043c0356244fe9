// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "asablade/config.hpp"
#include "asablade/gilbert.hpp"
#include "asablade/maskgen.hpp"
#include "asablade/rng.hpp"
#include "asablade/tensor.hpp"

namespace asablade {

enum class Structure {
  kSmoothField,       // low-pass random field; nearby tokens share keys
  kBlockMotif,        // piecewise-constant motifs on cubes of side corr_length
  kUniform,           // constant q and k: every logit equal
  kAdversarialSpike,  // near-flat logits plus a few isolated high-logit keys
};

Structure parse_structure(const std::string& s);
std::string structure_name(Structure s);

struct WorkloadSpec {
  TokenGrid grid{4, 16, 16};
  std::size_t d = 32;
  Structure structure = Structure::kSmoothField;
  double corr_length = 3.0;  // tokens; infinity gives a constant field
  double sharpness = 8.0;    // approximate self logit of a token
  std::uint64_t seed = 0;

  void validate() const;
};

/// Tokens in raster order over spec.grid.
struct Workload {
  Tensor q, k, v;
};

Workload generate_workload(const WorkloadSpec& spec, const RngStream& rng);
inline Workload generate_workload(const WorkloadSpec& spec) {
  return generate_workload(spec, RngStream(spec.seed));
}

/// Separable Gaussian low-pass of white noise, one field per channel, each
/// channel standardized to zero mean and unit variance. Returns grid.size() x d.
Tensor smooth_field(const TokenGrid& grid, std::size_t d, double corr_length, RngStream rng);

enum class Variant { kAsa, kAsaGt, kStaticWindow, kDense };

Variant parse_variant(const std::string& s);
std::string variant_name(Variant v);

struct PipelineOptions {
  /// In (0, 1): pick tau per run so the ASA mask lands nearest this sparsity.
  /// Otherwise cfg.tau is used as given.
  double target_sparsity = -1.0;
};

struct RunReport {
  Variant variant = Variant::kDense;
  AttnConfig cfg;
  WorkloadSpec spec;
  double tau = 0.0;                // tau behind the ASA mask
  double sparsity = 0.0;           // block sparsity of the executed mask
  double rel_error = 0.0;          // ||out - dense|| / ||dense||
  double psnr = 0.0;               // over the whole output, peak = dense range
  double ssim = 0.0;               // mean over frames and channels
  std::uint64_t flops_dense = 0;   // dense attention kernel
  std::uint64_t flops_sparse = 0;  // executed attention kernel
  std::uint64_t flops_probe = 0;   // mask construction (asa variants only)
  double flops_ratio = 0.0;        // flops_sparse / flops_dense
  double mask_overlap = 0.0;       // IoU with the dense-importance threshold mask
  Tensor out;                      // raster order
};

/// Gilbert reorder, probe, mask, attend, inverse reorder; every variant is
/// scored against dense attention on the raster-order tokens.
/// asa_gt with cfg.pool_n = 0 pools over cfg.block tokens.
std::vector<RunReport> run_pipeline(const WorkloadSpec& spec, const AttnConfig& cfg,
                                    const std::vector<Variant>& variants,
                                    const PipelineOptions& opts = {});

/// Same pipeline on caller-provided raster-order tokens.
std::vector<RunReport> run_pipeline(const Workload& w, const WorkloadSpec& spec,
                                    const AttnConfig& cfg, const std::vector<Variant>& variants,
                                    const PipelineOptions& opts = {});

/// Scores an output against the dense reference, reshaping both to the grid.
void score_output(const Tensor& out, const Tensor& dense, const TokenGrid& grid, RunReport& r);

inline constexpr const char* kSweepHeader =
    "tau,variant,sparsity,rel_error,psnr,ssim,flops_ratio,overlap";

/// One row per (tau, variant), tau-major in the given order. Points run
/// concurrently; rows are written by the caller thread only.
std::vector<RunReport> sweep(const WorkloadSpec& spec, const AttnConfig& cfg,
                             const std::vector<double>& taus,
                             const std::vector<Variant>& variants, const std::string& out_csv,
                             unsigned threads = 0);

std::string sweep_csv_row(const RunReport& r);

}  // namespace asablade
