// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/asablade.h"

#include <algorithm>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "asablade/btf.hpp"
#include "asablade/error.hpp"
#include "asablade/gilbert.hpp"
#include "asablade/maskgen.hpp"
#include "asablade/metrics.hpp"
#include "asablade/prober.hpp"
#include "asablade/sparse_attn.hpp"
#include "asablade/tdm.hpp"
#include "asablade/theory.hpp"
#include "asablade/workload.hpp"

struct asab_tensor {
  asablade::Tensor t;
};
struct asab_mask {
  asablade::BlockMask m;
};
struct asab_perm {
  asablade::Permutation p;
};
struct asab_distill_result {
  asablade::tdm::DistillResult r;
  std::size_t dim = 0;
};

namespace {

using namespace asablade;

thread_local std::string g_last_error;

template <class F>
asab_status guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return ASAB_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    switch (e.kind()) {
      case ErrorKind::kValidation: return ASAB_ERR_VALIDATION;
      case ErrorKind::kNumerical: return ASAB_ERR_NUMERICAL;
      case ErrorKind::kIo: return ASAB_ERR_IO;
    }
    return ASAB_ERR_INTERNAL;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ASAB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ASAB_ERR_INTERNAL;
  }
}

template <class T>
const T& deref(const T* p, const char* what) {
  require(p != nullptr, std::string(what) + " is NULL");
  return *p;
}

template <class T>
void require_out(T** out, const char* what) {
  require(out != nullptr, std::string(what) + " out-pointer is NULL");
  *out = nullptr;
}

AttnConfig to_cfg(const asab_attn_config* c) {
  const auto& in = deref(c, "config");
  AttnConfig cfg;
  cfg.block = in.block;
  cfg.samples = in.samples;
  cfg.tau = in.tau;
  cfg.min_keep = in.min_keep;
  cfg.max_keep = in.max_keep;
  cfg.pool_n = in.pool_n;
  cfg.scale = in.scale;
  require(in.sampling == ASAB_SAMPLING_UNIFORM || in.sampling == ASAB_SAMPLING_STRIDED,
          "unknown sampling mode");
  cfg.sampling = in.sampling == ASAB_SAMPLING_UNIFORM ? SamplingMode::kUniform
                                                      : SamplingMode::kStrided;
  require(in.curve >= ASAB_CURVE_GILBERT3D && in.curve <= ASAB_CURVE_RASTER, "unknown curve mode");
  cfg.curve = static_cast<CurveMode>(in.curve);
  return cfg;
}

WorkloadSpec to_spec(const asab_workload_spec* s) {
  const auto& in = deref(s, "workload spec");
  WorkloadSpec spec;
  spec.grid = {in.t, in.h, in.w};
  spec.d = in.d;
  require(in.structure >= ASAB_STRUCT_SMOOTH_FIELD && in.structure <= ASAB_STRUCT_ADVERSARIAL_SPIKE,
          "unknown workload structure");
  spec.structure = static_cast<Structure>(in.structure);
  spec.corr_length = in.corr_length;
  spec.sharpness = in.sharpness;
  spec.seed = in.seed;
  spec.validate();
  return spec;
}

std::vector<Variant> to_variants(const int* v, std::size_t n) {
  require(n > 0 && v != nullptr, "empty variant list");
  std::vector<Variant> out;
  for (std::size_t i = 0; i < n; ++i) {
    require(v[i] >= ASAB_VARIANT_ASA && v[i] <= ASAB_VARIANT_DENSE, "unknown variant id");
    out.push_back(static_cast<Variant>(v[i]));
  }
  return out;
}

asab_tensor* wrap(Tensor t) { return new asab_tensor{std::move(t)}; }

}  // namespace

extern "C" {

uint32_t asab_abi_version(void) { return ASAB_ABI_VERSION; }

const char* asab_last_error(void) { return g_last_error.c_str(); }

void asab_attn_config_default(asab_attn_config* cfg) {
  if (!cfg) return;
  const AttnConfig d;
  *cfg = {d.block, d.samples, d.tau, d.min_keep, d.max_keep, d.pool_n, d.scale,
          ASAB_SAMPLING_UNIFORM, ASAB_CURVE_GILBERT3D};
}

asab_status asab_tensor_create(const size_t* shape, size_t rank, const float* data,
                               asab_tensor** out) {
  return guard([&] {
    require_out(out, "tensor");
    require(shape != nullptr && rank >= 1, "tensor needs a shape of rank >= 1");
    std::vector<std::size_t> s(shape, shape + rank);
    Tensor t(s);
    if (data) std::copy(data, data + t.size(), t.values().begin());
    *out = wrap(std::move(t));
  });
}

void asab_tensor_destroy(asab_tensor* t) { delete t; }
size_t asab_tensor_rank(const asab_tensor* t) { return t ? t->t.rank() : 0; }
size_t asab_tensor_dim(const asab_tensor* t, size_t axis) {
  return t && axis < t->t.rank() ? t->t.shape()[axis] : 0;
}
size_t asab_tensor_size(const asab_tensor* t) { return t ? t->t.size() : 0; }
const float* asab_tensor_data(const asab_tensor* t) { return t ? t->t.values().data() : nullptr; }

asab_status asab_tensor_load(const char* path, asab_tensor** out) {
  return guard([&] {
    require_out(out, "tensor");
    require(path != nullptr, "path is NULL");
    *out = wrap(btf::load(path));
  });
}

asab_status asab_tensor_save(const asab_tensor* t, const char* path) {
  return guard([&] {
    require(path != nullptr, "path is NULL");
    btf::save(path, deref(t, "tensor").t);
  });
}

asab_status asab_gilbert_order(size_t t, size_t h, size_t w, int curve, asab_perm** out) {
  return guard([&] {
    require_out(out, "permutation");
    require(curve >= ASAB_CURVE_GILBERT3D && curve <= ASAB_CURVE_RASTER, "unknown curve mode");
    *out = new asab_perm{gilbert_order({t, h, w}, static_cast<CurveMode>(curve))};
  });
}

void asab_perm_destroy(asab_perm* p) { delete p; }
size_t asab_perm_size(const asab_perm* p) { return p ? p->p.size() : 0; }
const size_t* asab_perm_forward(const asab_perm* p) { return p ? p->p.forward().data() : nullptr; }

asab_status asab_perm_apply(const asab_perm* p, const asab_tensor* x, asab_tensor** out) {
  return guard([&] {
    require_out(out, "tensor");
    *out = wrap(apply_permutation(deref(x, "tensor").t, deref(p, "permutation").p));
  });
}

asab_status asab_perm_undo(const asab_perm* p, const asab_tensor* x, asab_tensor** out) {
  return guard([&] {
    require_out(out, "tensor");
    *out = wrap(undo_permutation(deref(x, "tensor").t, deref(p, "permutation").p));
  });
}

double asab_mean_intra_block_distance(size_t t, size_t h, size_t w, const asab_perm* p,
                                      size_t block) {
  double r = -1.0;
  const asab_status s = guard(
      [&] { r = mean_intra_block_distance({t, h, w}, deref(p, "permutation").p, block); });
  return s == ASAB_OK ? r : -1.0;
}

asab_status asab_probe(const asab_tensor* q, const asab_tensor* k, const asab_attn_config* cfg,
                       uint64_t seed, int oracle, asab_tensor** pimp, uint64_t* flops) {
  return guard([&] {
    require_out(pimp, "importance map");
    const AttnConfig c = to_cfg(cfg);
    FlopCounter f;
    ImportanceMap m = oracle ? dense_importance_map(deref(q, "q").t, deref(k, "k").t, c, &f)
                             : probe_importance(deref(q, "q").t, deref(k, "k").t, c,
                                                RngStream(seed), &f);
    if (flops) *flops = f.total();
    *pimp = wrap(std::move(m.values));
  });
}

asab_status asab_mask_threshold(const asab_tensor* pimp, const asab_attn_config* cfg,
                                asab_mask** out) {
  return guard([&] {
    require_out(out, "mask");
    ImportanceMap m{deref(pimp, "importance map").t, Provenance::kSparseProbe};
    require(m.values.rank() == 2, "importance map must be rank 2");
    *out = new asab_mask{threshold_mask(m, to_cfg(cfg))};
  });
}

asab_status asab_mask_static_window(size_t n_blocks, size_t window, asab_mask** out) {
  return guard([&] {
    require_out(out, "mask");
    *out = new asab_mask{static_window_mask(n_blocks, window)};
  });
}

asab_status asab_mask_from_tensor(const asab_tensor* t, asab_mask** out) {
  return guard([&] {
    require_out(out, "mask");
    *out = new asab_mask{BlockMask::from_tensor(deref(t, "tensor").t)};
  });
}

asab_status asab_mask_to_tensor(const asab_mask* m, asab_tensor** out) {
  return guard([&] {
    require_out(out, "tensor");
    *out = wrap(deref(m, "mask").m.to_tensor());
  });
}

asab_status asab_mask_write_csv(const asab_mask* m, const char* path) {
  return guard([&] {
    require(path != nullptr, "path is NULL");
    const auto& mask = deref(m, "mask").m;
    std::ofstream os(path);
    if (!os) throw Error(ErrorKind::kIo, std::string("cannot write '") + path + "'");
    os << mask_to_csv(mask);
    if (!os) throw Error(ErrorKind::kIo, std::string("write to '") + path + "' failed");
  });
}

void asab_mask_destroy(asab_mask* m) { delete m; }
size_t asab_mask_rows(const asab_mask* m) { return m ? m->m.rows() : 0; }
size_t asab_mask_cols(const asab_mask* m) { return m ? m->m.cols() : 0; }
int asab_mask_kept(const asab_mask* m, size_t i, size_t j) {
  return m && i < m->m.rows() && j < m->m.cols() && m->m.kept(i, j) ? 1 : 0;
}
double asab_mask_sparsity(const asab_mask* m) { return m ? m->m.sparsity() : 0.0; }
size_t asab_mask_degenerate_rows(const asab_mask* m) {
  return m ? m->m.degenerate_rows().size() : 0;
}

asab_status asab_attend(const asab_tensor* q, const asab_tensor* k, const asab_tensor* v,
                        const asab_mask* mask, const asab_attn_config* cfg, asab_tensor** out,
                        asab_attend_stats* stats) {
  return guard([&] {
    require_out(out, "tensor");
    const AttnConfig c = to_cfg(cfg);
    AttnOutput r = sparse_attention_gt(deref(q, "q").t, deref(k, "k").t, deref(v, "v").t,
                                       deref(mask, "mask").m, c);
    if (stats) *stats = {r.effective_sparsity, r.flops.total()};
    *out = wrap(std::move(r.out));
  });
}

asab_status asab_dense_attention(const asab_tensor* q, const asab_tensor* k, const asab_tensor* v,
                                 double scale, asab_tensor** out, uint64_t* flops) {
  return guard([&] {
    require_out(out, "tensor");
    const Tensor& qt = deref(q, "q").t;
    require(qt.rank() == 2, "q must be rank 2");
    AttnConfig c;
    c.scale = scale;
    FlopCounter f;
    *out = wrap(dense_attention(qt, deref(k, "k").t, deref(v, "v").t,
                                c.effective_scale(qt.cols()), &f));
    if (flops) *flops = f.total();
  });
}

asab_status asab_compare(const asab_tensor* out, const asab_tensor* ref, size_t t, size_t h,
                         size_t w, asab_metrics* metrics) {
  return guard([&] {
    require(metrics != nullptr, "metrics out-pointer is NULL");
    const Tensor& a = deref(out, "output").t;
    const Tensor& b = deref(ref, "reference").t;
    require(a.shape() == b.shape(), "compare: shapes differ (" + shape_string(a.shape()) +
                                        " vs " + shape_string(b.shape()) + ")");
    RunReport r;
    if (t == 0 && h == 0 && w == 0) {
      const Tensor a2({a.rows(), a.cols()}, a.storage()), b2({b.rows(), b.cols()}, b.storage());
      const auto [lo, hi] = std::minmax_element(b.values().begin(), b.values().end());
      const double peak = *hi > *lo ? double(*hi) - *lo : 1.0;
      r.rel_error = relative_error(a, b);
      r.psnr = psnr(a, b, peak);
      r.ssim = ssim(a2, b2, peak);
    } else {
      require(t * h * w == a.rows(), "compare: t*h*w must equal the row count");
      score_output(a, b, {t, h, w}, r);
    }
    *metrics = {r.rel_error, r.psnr, r.ssim, max_abs_diff(a, b)};
  });
}

asab_status asab_rank_law_report(size_t n, size_t k, size_t trials, uint64_t seed,
                                 unsigned threads, asab_rank_law* out) {
  return guard([&] {
    require(out != nullptr, "report out-pointer is NULL");
    const auto r = theory::rank_law_report(n, k, trials, RngStream(seed), threads);
    *out = {r.n, r.k, r.trials, r.empirical_mean, r.empirical_var, r.analytic_mean,
            r.analytic_var};
  });
}

asab_status asab_confidence_table(size_t n, size_t k, size_t trials, uint64_t seed,
                                  unsigned threads, asab_confidence* out) {
  return guard([&] {
    require(out != nullptr, "table out-pointer is NULL");
    const auto c = theory::confidence_percentiles(n, k, trials, RngStream(seed), threads);
    for (int i = 0; i < 3; ++i) {
      out->level[i] = theory::kConfidenceLevels[i];
      out->normal_bound[i] = c.normal_bound[i];
      out->empirical_bound[i] = c.empirical_bound[i];
      out->exact_bound[i] = c.exact_bound[i];
      out->normal_percentile[i] = c.normal_percentile[i];
      out->empirical_percentile[i] = c.empirical_percentile[i];
    }
    out->expected_rank_percentile = c.expected_rank_percentile;
  });
}

void asab_distill_config_default(asab_distill_config* cfg) {
  if (!cfg) return;
  const tdm::DistillConfig d;
  *cfg = {"gauss:3,0.5", 0, 0, 1, 4, d.iters, d.batch, d.fake_batch, d.eval_batch, d.buckets,
          d.trace_every, 0.0, d.seed, 8, 2, 2, 0.9};
}

asab_status asab_distill(const asab_distill_config* cfg, asab_distill_result** out) {
  return guard([&] {
    require_out(out, "distill result");
    const auto& in = deref(cfg, "distill config");
    require(in.teacher != nullptr, "teacher spec is NULL");
    require(in.student == 0 || in.student == 1, "student must be 0 (affine) or 1 (attn)");
    require(in.schedule == 0 || in.schedule == 1, "schedule must be 0 or 1");
    const auto sched = tdm::Schedule::uniform(
        in.schedule == 0 ? tdm::ScheduleKind::kRectifiedFlow : tdm::ScheduleKind::kVpCosine,
        in.stages);
    tdm::DistillConfig dc;
    dc.iters = in.iters;
    dc.batch = in.batch;
    dc.fake_batch = in.fake_batch;
    dc.eval_batch = in.eval_batch;
    dc.buckets = in.buckets;
    dc.trace_every = in.trace_every;
    dc.seed = in.seed;
    dc.lr = in.lr > 0.0 ? in.lr : (in.student == 0 ? 1e-2 : 1e-3);

    std::unique_ptr<tdm::Student> student;
    if (in.student == 0) {
      student = std::make_unique<tdm::AffineStudent>(in.dim, in.stages);
    } else {
      tdm::AttnShape shape{in.tokens, in.width, in.block, 0.0};
      AttnConfig mc;
      mc.tau = in.tau;
      mc.min_keep = 0.0;
      student = std::make_unique<tdm::AttnStudent>(shape, in.stages, mc,
                                                   RngStream(in.seed).split(7));
    }
    const auto teacher = tdm::GaussianMixtureTeacher::parse(in.teacher, student->dim());
    auto res = std::make_unique<asab_distill_result>();
    res->dim = student->dim();
    res->r = tdm::distill(teacher, *student, sched, dc);
    const bool diverged = res->r.diverged;
    *out = res.release();
    if (diverged) fail_numerical("distillation diverged: moment error exceeded its limit");
  });
}

void asab_distill_result_destroy(asab_distill_result* r) { delete r; }
size_t asab_distill_trace_length(const asab_distill_result* r) {
  return r ? r->r.trace.size() : 0;
}
asab_trace_row asab_distill_trace_row(const asab_distill_result* r, size_t i) {
  if (!r || i >= r->r.trace.size()) return {0, 0.0, 0.0, 0.0, 0.0};
  const auto& t = r->r.trace[i];
  return {t.iter, t.mean_err, t.cov_err, t.fake_residual, t.grad_norm};
}
size_t asab_distill_dim(const asab_distill_result* r) { return r ? r->dim : 0; }
const double* asab_distill_mean(const asab_distill_result* r) {
  return r && !r->r.sample_mean.empty() ? r->r.sample_mean.data() : nullptr;
}
const double* asab_distill_std(const asab_distill_result* r) {
  return r && !r->r.sample_std.empty() ? r->r.sample_std.data() : nullptr;
}

void asab_workload_spec_default(asab_workload_spec* spec) {
  if (!spec) return;
  const WorkloadSpec d;
  *spec = {d.grid.t, d.grid.h, d.grid.w, d.d, ASAB_STRUCT_SMOOTH_FIELD, d.corr_length,
           d.sharpness, d.seed};
}

asab_status asab_generate_workload(const asab_workload_spec* spec, asab_tensor** q,
                                   asab_tensor** k, asab_tensor** v) {
  return guard([&] {
    require_out(q, "q");
    require_out(k, "k");
    require_out(v, "v");
    Workload w = generate_workload(to_spec(spec));
    *q = wrap(std::move(w.q));
    *k = wrap(std::move(w.k));
    *v = wrap(std::move(w.v));
  });
}

asab_status asab_run_pipeline(const asab_workload_spec* spec, const asab_attn_config* cfg,
                              const int* variants, size_t n_variants, double target_sparsity,
                              asab_run_report* reports) {
  return guard([&] {
    require(reports != nullptr, "reports out-pointer is NULL");
    PipelineOptions opts;
    opts.target_sparsity = target_sparsity;
    const auto rows =
        run_pipeline(to_spec(spec), to_cfg(cfg), to_variants(variants, n_variants), opts);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      reports[i] = {static_cast<int>(r.variant), r.tau, r.sparsity, r.rel_error, r.psnr, r.ssim,
                    r.flops_ratio, r.mask_overlap, r.flops_dense, r.flops_sparse, r.flops_probe};
    }
  });
}

asab_status asab_sweep(const asab_workload_spec* spec, const asab_attn_config* cfg,
                       const double* taus, size_t n_taus, const int* variants, size_t n_variants,
                       const char* out_csv, unsigned threads) {
  return guard([&] {
    require(out_csv != nullptr, "output path is NULL");
    require(n_taus > 0 && taus != nullptr, "empty tau list");
    sweep(to_spec(spec), to_cfg(cfg), std::vector<double>(taus, taus + n_taus),
          to_variants(variants, n_variants), out_csv, threads);
  });
}

}  // extern "C"
