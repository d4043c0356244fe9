// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/workload.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "asablade/error.hpp"
#include "asablade/metrics.hpp"
#include "asablade/prober.hpp"
#include "asablade/sparse_attn.hpp"

namespace asablade {

Structure parse_structure(const std::string& s) {
  if (s == "smooth_field") return Structure::kSmoothField;
  if (s == "block_motif") return Structure::kBlockMotif;
  if (s == "uniform") return Structure::kUniform;
  if (s == "adversarial_spike") return Structure::kAdversarialSpike;
  fail_validation("unknown workload structure '" + s + "'");
}

std::string structure_name(Structure s) {
  switch (s) {
    case Structure::kSmoothField: return "smooth_field";
    case Structure::kBlockMotif: return "block_motif";
    case Structure::kUniform: return "uniform";
    case Structure::kAdversarialSpike: return "adversarial_spike";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "asa") return Variant::kAsa;
  if (s == "asa_gt") return Variant::kAsaGt;
  if (s == "static_window") return Variant::kStaticWindow;
  if (s == "dense") return Variant::kDense;
  fail_validation("unknown variant '" + s + "' (expected asa, asa_gt, static_window, dense)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kAsa: return "asa";
    case Variant::kAsaGt: return "asa_gt";
    case Variant::kStaticWindow: return "static_window";
    case Variant::kDense: return "dense";
  }
  return "?";
}

void WorkloadSpec::validate() const {
  require(grid.t >= 1 && grid.h >= 1 && grid.w >= 1, "workload grid extents must be >= 1");
  require(d >= 1, "workload head dim must be >= 1");
  require(corr_length >= 0.0, "correlation length must be >= 0 (inf allowed)");
  require(sharpness > 0.0 && std::isfinite(sharpness), "sharpness must be positive and finite");
}

namespace {

// In-place Gaussian blur of `x` (grid.size() x d) along one grid axis, with
// edge replication.
void blur_axis(std::vector<double>& x, const TokenGrid& g, std::size_t d, int axis,
               double sigma) {
  const std::size_t ext[3] = {g.t, g.h, g.w};
  const std::size_t stride[3] = {g.h * g.w * d, g.w * d, d};
  const std::size_t n = ext[axis];
  if (n == 1 || sigma <= 0.0) return;
  const auto radius = static_cast<std::ptrdiff_t>(
      std::min(std::ceil(3.0 * sigma), 4.0 * double(n)));
  std::vector<double> kern(2 * radius + 1);
  double ks = 0.0;
  for (std::ptrdiff_t r = -radius; r <= radius; ++r)
    ks += (kern[r + radius] = std::exp(-0.5 * double(r * r) / (sigma * sigma)));
  for (auto& v : kern) v /= ks;

  std::vector<double> line(n), out(n);
  const std::size_t total = g.size() * d;
  for (std::size_t base = 0; base < total; ++base) {
    // Visit each line once: from its first element along `axis`.
    if ((base / stride[axis]) % n != 0) continue;
    for (std::size_t i = 0; i < n; ++i) line[i] = x[base + i * stride[axis]];
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::ptrdiff_t r = -radius; r <= radius; ++r) {
        const auto j = std::clamp<std::ptrdiff_t>(std::ptrdiff_t(i) + r, 0, std::ptrdiff_t(n) - 1);
        acc += kern[r + radius] * line[j];
      }
      out[i] = acc;
    }
    for (std::size_t i = 0; i < n; ++i) x[base + i * stride[axis]] = out[i];
  }
}

Tensor to_tensor(const std::vector<double>& x, std::size_t rows, std::size_t cols,
                 double gain) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < x.size(); ++i) t.values()[i] = static_cast<float>(gain * x[i]);
  return t;
}

std::vector<double> normals(std::size_t n, RngStream rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

Tensor smooth_field(const TokenGrid& grid, std::size_t d, double corr_length, RngStream rng) {
  require(d >= 1 && grid.size() >= 1, "smooth_field: empty shape");
  require(corr_length >= 0.0, "smooth_field: correlation length must be >= 0");
  const std::size_t n = grid.size();
  std::vector<double> x(n * d);
  if (std::isinf(corr_length)) {
    // Infinite correlation: one value per channel, shared by every token.
    const auto c = normals(d, rng);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) x[i * d + j] = c[j];
    return to_tensor(x, n, d, 1.0);
  }
  x = normals(n * d, rng);
  for (int axis = 0; axis < 3; ++axis) blur_axis(x, grid, d, axis, corr_length);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i * d + j];
    mean /= double(n);
    for (std::size_t i = 0; i < n; ++i) var += (x[i * d + j] - mean) * (x[i * d + j] - mean);
    var /= double(n);
    const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t i = 0; i < n; ++i) x[i * d + j] = (x[i * d + j] - mean) * inv;
  }
  return to_tensor(x, n, d, 1.0);
}

Workload generate_workload(const WorkloadSpec& spec, const RngStream& rng) {
  spec.validate();
  const TokenGrid& g = spec.grid;
  const std::size_t n = g.size(), d = spec.d;
  // Unit-variance q, k rows give q.k ~ d; this gain makes scale * q.k ~ sharpness.
  const double gain = std::sqrt(spec.sharpness / std::sqrt(double(d)));
  Workload w;
  switch (spec.structure) {
    case Structure::kSmoothField: {
      const Tensor f = smooth_field(g, d, spec.corr_length, rng.split(1));
      const Tensor e = smooth_field(g, d, spec.corr_length, rng.split(2));
      w.q = Tensor({n, d});
      w.k = Tensor({n, d});
      for (std::size_t i = 0; i < n * d; ++i) {
        w.k.values()[i] = static_cast<float>(gain * f.values()[i]);
        w.q.values()[i] = static_cast<float>(gain * (0.95 * f.values()[i] + 0.31 * e.values()[i]));
      }
      w.v = smooth_field(g, d, spec.corr_length, rng.split(3));
      break;
    }
    case Structure::kBlockMotif: {
      const auto side = std::max<std::size_t>(
          1, std::isinf(spec.corr_length) ? n : std::size_t(std::llround(spec.corr_length)));
      w.q = Tensor({n, d});
      w.k = Tensor({n, d});
      w.v = Tensor({n, d});
      RngStream noise = rng.split(2);
      for (std::size_t i = 0; i < n; ++i) {
        const auto [f, y, x] = g.coords(i);
        const std::uint64_t cell =
            ((f / side) * (g.h / side + 1) + y / side) * (g.w / side + 1) + x / side;
        RngStream motif = rng.split(1).split(cell);
        for (std::size_t j = 0; j < d; ++j) {
          const double m = motif.normal(), mv = motif.normal();
          w.k(i, j) = static_cast<float>(gain * (m + 0.2 * noise.normal()));
          w.q(i, j) = static_cast<float>(gain * (m + 0.2 * noise.normal()));
          w.v(i, j) = static_cast<float>(mv + 0.1 * noise.normal());
        }
      }
      break;
    }
    case Structure::kUniform: {
      const auto u = normals(d, rng.split(1)), u2 = normals(d, rng.split(2));
      w.q = Tensor({n, d});
      w.k = Tensor({n, d});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          w.q(i, j) = static_cast<float>(gain * u[j]);
          w.k(i, j) = static_cast<float>(gain * u2[j]);
        }
      w.v = smooth_field(g, d, spec.corr_length, rng.split(3));
      break;
    }
    case Structure::kAdversarialSpike: {
      auto u = normals(d, rng.split(1));
      double norm = 0.0;
      for (double x : u) norm += x * x;
      for (auto& x : u) x *= std::sqrt(double(d) / norm);
      RngStream noise = rng.split(2);
      w.q = Tensor({n, d});
      w.k = Tensor({n, d});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          w.q(i, j) = static_cast<float>(gain * (u[j] + 0.3 * noise.normal()));
          w.k(i, j) = static_cast<float>(0.3 * gain * noise.normal());
        }
      RngStream pick = rng.split(3);
      for (std::size_t s : pick.sample_without_replacement(n, std::max<std::size_t>(1, n / 256)))
        for (std::size_t j = 0; j < d; ++j) w.k(s, j) = static_cast<float>(1.5 * gain * u[j]);
      w.v = Tensor({n, d});
      RngStream vr = rng.split(4);
      for (auto& x : w.v.values()) x = static_cast<float>(vr.normal());
      break;
    }
  }
  w.q.check_finite("workload q");
  w.k.check_finite("workload k");
  w.v.check_finite("workload v");
  return w;
}

void score_output(const Tensor& out, const Tensor& dense, const TokenGrid& grid, RunReport& r) {
  require(out.rows() == grid.size() && dense.rows() == grid.size(),
          "score_output: outputs do not match the grid");
  r.rel_error = relative_error(out, dense);
  const auto [lo, hi] = std::minmax_element(dense.values().begin(), dense.values().end());
  const double peak = *hi > *lo ? double(*hi) - *lo : 1.0;
  r.psnr = psnr(out, dense, peak);
  // Per (frame, channel) images of size h x w.
  const std::size_t c = dense.cols(), hw = grid.h * grid.w;
  double total = 0.0;
  Tensor a({grid.h, grid.w}), b({grid.h, grid.w});
  for (std::size_t f = 0; f < grid.t; ++f)
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < hw; ++p) {
        a.values()[p] = out(f * hw + p, ch);
        b.values()[p] = dense(f * hw + p, ch);
      }
      total += ssim(a, b, peak);
    }
  r.ssim = total / double(grid.t * c);
}

std::vector<RunReport> run_pipeline(const Workload& w, const WorkloadSpec& spec,
                                    const AttnConfig& cfg, const std::vector<Variant>& variants,
                                    const PipelineOptions& opts) {
  cfg.validate();
  spec.validate();
  require(!variants.empty(), "run_pipeline: empty variant list");
  require(w.q.rows() == spec.grid.size() && w.k.rows() == spec.grid.size() &&
              w.v.rows() == spec.grid.size(),
          "run_pipeline: token count does not match the grid");

  FlopCounter fd;
  const Tensor dense = dense_attention(w.q, w.k, w.v, cfg.effective_scale(w.q.cols()), &fd);
  const Permutation perm = gilbert_order(spec.grid, cfg.curve);
  const Tensor qp = apply_permutation(w.q, perm), kp = apply_permutation(w.k, perm),
               vp = apply_permutation(w.v, perm);
  const std::size_t nb = num_blocks(spec.grid.size(), cfg.block);

  AttnConfig used = cfg;
  FlopCounter fp;
  const ImportanceMap imp = probe_importance(qp, kp, cfg, RngStream(spec.seed).split(0x9e0b), &fp);
  BlockMask asa_mask;
  if (opts.target_sparsity > 0.0 && opts.target_sparsity < 1.0) {
    TargetedMask tm = threshold_mask_for_sparsity(imp, cfg, opts.target_sparsity);
    asa_mask = std::move(tm.mask);
    used.tau = tm.tau;
  } else {
    asa_mask = threshold_mask(imp, cfg);
  }
  const BlockMask oracle = threshold_mask(dense_importance_map(qp, kp, used), used);

  std::vector<RunReport> out;
  for (Variant v : variants) {
    RunReport r;
    r.variant = v;
    r.cfg = used;
    r.spec = spec;
    r.tau = used.tau;
    r.flops_dense = fd.total();
    try {
      AttnOutput res;
      BlockMask mask;
      switch (v) {
        case Variant::kDense:
          r.out = dense;
          r.flops_sparse = fd.total();
          mask = BlockMask::full(nb, nb);
          break;
        case Variant::kAsa:
        case Variant::kAsaGt:
          mask = asa_mask;
          if (v == Variant::kAsa) {
            res = sparse_attention(qp, kp, vp, mask, used);
          } else {
            // An unset pool window pools one block per global token.
            r.cfg.pool_n = used.pool_n ? used.pool_n : used.block;
            res = sparse_attention_gt(qp, kp, vp, mask, r.cfg);
          }
          r.flops_probe = fp.total();
          break;
        case Variant::kStaticWindow:
          mask = static_window_mask(nb, window_for_sparsity(nb, asa_mask.sparsity()));
          res = sparse_attention(qp, kp, vp, mask, used);
          break;
      }
      if (v != Variant::kDense) {
        r.out = undo_permutation(res.out, perm);
        r.flops_sparse = res.flops.total();
      }
      r.sparsity = mask.sparsity();
      r.mask_overlap = mask_overlap(mask, oracle);
      r.flops_ratio = double(r.flops_sparse) / double(r.flops_dense);
      score_output(r.out, dense, spec.grid, r);
    } catch (const Error& e) {
      throw Error(e.kind(), "variant " + variant_name(v) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunReport> run_pipeline(const WorkloadSpec& spec, const AttnConfig& cfg,
                                    const std::vector<Variant>& variants,
                                    const PipelineOptions& opts) {
  require(!variants.empty(), "run_pipeline: empty variant list");
  return run_pipeline(generate_workload(spec), spec, cfg, variants, opts);
}

std::string sweep_csv_row(const RunReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.tau << ',' << variant_name(r.variant) << ',' << r.sparsity << ',' << r.rel_error << ','
     << r.psnr << ',' << r.ssim << ',' << r.flops_ratio << ',' << r.mask_overlap;
  return os.str();
}

std::vector<RunReport> sweep(const WorkloadSpec& spec, const AttnConfig& cfg,
                             const std::vector<double>& taus,
                             const std::vector<Variant>& variants, const std::string& out_csv,
                             unsigned threads) {
  require(!taus.empty(), "sweep: empty tau list");
  require(!variants.empty(), "sweep: empty variant list");
  for (double t : taus) require(t > 0.0 && t <= 1.0, "sweep: every tau must lie in (0, 1]");
  std::ofstream os(out_csv);
  if (!os) throw Error(ErrorKind::kIo, "sweep: cannot write '" + out_csv + "'");

  const Workload w = generate_workload(spec);
  std::vector<std::vector<RunReport>> points(taus.size());
  std::vector<std::exception_ptr> errors(taus.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < taus.size();) {
      try {
        AttnConfig c = cfg;
        c.tau = taus[i];
        points[i] = run_pipeline(w, spec, c, variants);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(taus.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<RunReport> rows;
  os << kSweepHeader << '\n';
  for (auto& p : points)
    for (auto& r : p) {
      os << sweep_csv_row(r) << '\n';
      rows.push_back(std::move(r));
    }
  if (!os) throw Error(ErrorKind::kIo, "sweep: write to '" + out_csv + "' failed");
  return rows;
}

}  // namespace asablade
