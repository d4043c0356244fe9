/* Copyright 2026 The asablade Authors.
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to libasablade. Every call returns an asab_status; on failure
 * asab_last_error() describes the most recent error on the calling thread.
 * Handles returned through out-parameters are owned by the caller and must be
 * released with the matching *_destroy function. Destroy functions accept NULL.
 */
#ifndef ASABLADE_ASABLADE_H_
#define ASABLADE_ASABLADE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(ASAB_BUILDING)
#define ASAB_API __attribute__((visibility("default")))
#else
#define ASAB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define ASAB_ABI_VERSION 1u

typedef enum {
  ASAB_OK = 0,
  ASAB_ERR_VALIDATION = 1,
  ASAB_ERR_NUMERICAL = 2,
  ASAB_ERR_IO = 3,
  ASAB_ERR_INTERNAL = 4
} asab_status;

typedef enum { ASAB_SAMPLING_UNIFORM = 0, ASAB_SAMPLING_STRIDED = 1 } asab_sampling;
typedef enum { ASAB_CURVE_GILBERT3D = 0, ASAB_CURVE_PERFRAME2D = 1, ASAB_CURVE_RASTER = 2 } asab_curve;
typedef enum {
  ASAB_VARIANT_ASA = 0,
  ASAB_VARIANT_ASA_GT = 1,
  ASAB_VARIANT_STATIC_WINDOW = 2,
  ASAB_VARIANT_DENSE = 3
} asab_variant;
typedef enum {
  ASAB_STRUCT_SMOOTH_FIELD = 0,
  ASAB_STRUCT_BLOCK_MOTIF = 1,
  ASAB_STRUCT_UNIFORM = 2,
  ASAB_STRUCT_ADVERSARIAL_SPIKE = 3
} asab_structure;

typedef struct asab_tensor asab_tensor;
typedef struct asab_mask asab_mask;
typedef struct asab_perm asab_perm;
typedef struct asab_distill_result asab_distill_result;

typedef struct {
  size_t block;
  size_t samples;
  double tau;
  double min_keep;
  double max_keep;
  size_t pool_n; /* 0 disables global tokens */
  double scale;  /* 0 means 1/sqrt(head_dim) */
  int sampling;  /* asab_sampling */
  int curve;     /* asab_curve */
} asab_attn_config;

ASAB_API uint32_t asab_abi_version(void);
ASAB_API const char* asab_last_error(void);
ASAB_API void asab_attn_config_default(asab_attn_config* cfg);

/* ---- tensors: row-major float32 with explicit shape ---- */
ASAB_API asab_status asab_tensor_create(const size_t* shape, size_t rank, const float* data,
                                        asab_tensor** out);
ASAB_API void asab_tensor_destroy(asab_tensor* t);
ASAB_API size_t asab_tensor_rank(const asab_tensor* t);
ASAB_API size_t asab_tensor_dim(const asab_tensor* t, size_t axis);
ASAB_API size_t asab_tensor_size(const asab_tensor* t);
ASAB_API const float* asab_tensor_data(const asab_tensor* t);
ASAB_API asab_status asab_tensor_load(const char* path, asab_tensor** out);
ASAB_API asab_status asab_tensor_save(const asab_tensor* t, const char* path);

/* ---- token reordering ---- */
ASAB_API asab_status asab_gilbert_order(size_t t, size_t h, size_t w, int curve, asab_perm** out);
ASAB_API void asab_perm_destroy(asab_perm* p);
ASAB_API size_t asab_perm_size(const asab_perm* p);
/* forward[i] is the raster index of the token at curve position i. */
ASAB_API const size_t* asab_perm_forward(const asab_perm* p);
ASAB_API asab_status asab_perm_apply(const asab_perm* p, const asab_tensor* x, asab_tensor** out);
ASAB_API asab_status asab_perm_undo(const asab_perm* p, const asab_tensor* x, asab_tensor** out);
ASAB_API double asab_mean_intra_block_distance(size_t t, size_t h, size_t w, const asab_perm* p,
                                               size_t block);

/* ---- importance and masks ---- */
/* oracle != 0 computes the dense importance map instead of probing. */
ASAB_API asab_status asab_probe(const asab_tensor* q, const asab_tensor* k,
                                const asab_attn_config* cfg, uint64_t seed, int oracle,
                                asab_tensor** pimp, uint64_t* flops);
ASAB_API asab_status asab_mask_threshold(const asab_tensor* pimp, const asab_attn_config* cfg,
                                         asab_mask** out);
ASAB_API asab_status asab_mask_static_window(size_t n_blocks, size_t window, asab_mask** out);
ASAB_API asab_status asab_mask_from_tensor(const asab_tensor* t, asab_mask** out);
ASAB_API asab_status asab_mask_to_tensor(const asab_mask* m, asab_tensor** out);
ASAB_API asab_status asab_mask_write_csv(const asab_mask* m, const char* path);
ASAB_API void asab_mask_destroy(asab_mask* m);
ASAB_API size_t asab_mask_rows(const asab_mask* m);
ASAB_API size_t asab_mask_cols(const asab_mask* m);
ASAB_API int asab_mask_kept(const asab_mask* m, size_t i, size_t j);
ASAB_API double asab_mask_sparsity(const asab_mask* m);
ASAB_API size_t asab_mask_degenerate_rows(const asab_mask* m);

/* ---- attention ---- */
typedef struct {
  double effective_sparsity;
  uint64_t flops;
} asab_attend_stats;

/* cfg->pool_n > 0 selects the global-token variant. */
ASAB_API asab_status asab_attend(const asab_tensor* q, const asab_tensor* k, const asab_tensor* v,
                                 const asab_mask* mask, const asab_attn_config* cfg,
                                 asab_tensor** out, asab_attend_stats* stats);
ASAB_API asab_status asab_dense_attention(const asab_tensor* q, const asab_tensor* k,
                                          const asab_tensor* v, double scale, asab_tensor** out,
                                          uint64_t* flops);

typedef struct {
  double rel_error;
  double psnr;
  double ssim;
  double max_abs_diff;
} asab_metrics;

/* Compares out against ref. With t*h*w equal to the row count, SSIM averages
 * over (frame, channel) images of h x w; with t = h = w = 0 the whole tensor
 * is one image. */
ASAB_API asab_status asab_compare(const asab_tensor* out, const asab_tensor* ref, size_t t,
                                  size_t h, size_t w, asab_metrics* metrics);

/* ---- order statistics ---- */
typedef struct {
  size_t n, k, trials;
  double empirical_mean, empirical_var;
  double analytic_mean, analytic_var;
} asab_rank_law;

typedef struct {
  double level[3];
  double normal_bound[3];
  double empirical_bound[3];
  double exact_bound[3];
  double normal_percentile[3];
  double empirical_percentile[3];
  double expected_rank_percentile;
} asab_confidence;

ASAB_API asab_status asab_rank_law_report(size_t n, size_t k, size_t trials, uint64_t seed,
                                          unsigned threads, asab_rank_law* out);
ASAB_API asab_status asab_confidence_table(size_t n, size_t k, size_t trials, uint64_t seed,
                                           unsigned threads, asab_confidence* out);

/* ---- toy distillation ---- */
typedef struct {
  const char* teacher;  /* "gauss:m,s" or "mix:w,m,s;w,m,s" */
  int student;          /* 0 affine, 1 masked attention */
  int schedule;         /* 0 rectified_flow, 1 vp_cosine */
  size_t dim;           /* affine student dimension */
  size_t stages;
  size_t iters;
  size_t batch;
  size_t fake_batch;
  size_t eval_batch;
  size_t buckets;
  size_t trace_every;
  double lr;            /* 0 picks 1e-2 (affine) or 1e-3 (attention) */
  uint64_t seed;
  size_t tokens, width, block; /* attention student shape */
  double tau;                  /* attention student mask threshold */
} asab_distill_config;

typedef struct {
  size_t iter;
  double mean_err, cov_err, fake_residual, grad_norm;
} asab_trace_row;

ASAB_API void asab_distill_config_default(asab_distill_config* cfg);
/* Returns ASAB_ERR_NUMERICAL on divergence; *out still holds the trace. */
ASAB_API asab_status asab_distill(const asab_distill_config* cfg, asab_distill_result** out);
ASAB_API void asab_distill_result_destroy(asab_distill_result* r);
ASAB_API size_t asab_distill_trace_length(const asab_distill_result* r);
ASAB_API asab_trace_row asab_distill_trace_row(const asab_distill_result* r, size_t i);
ASAB_API size_t asab_distill_dim(const asab_distill_result* r);
/* Per-coordinate moments of the final sample batch; empty after divergence. */
ASAB_API const double* asab_distill_mean(const asab_distill_result* r);
ASAB_API const double* asab_distill_std(const asab_distill_result* r);

/* ---- synthetic workloads ---- */
typedef struct {
  size_t t, h, w, d;
  int structure; /* asab_structure */
  double corr_length;
  double sharpness;
  uint64_t seed;
} asab_workload_spec;

typedef struct {
  int variant;
  double tau;
  double sparsity;
  double rel_error;
  double psnr;
  double ssim;
  double flops_ratio;
  double mask_overlap;
  uint64_t flops_dense;
  uint64_t flops_sparse;
  uint64_t flops_probe;
} asab_run_report;

ASAB_API void asab_workload_spec_default(asab_workload_spec* spec);
ASAB_API asab_status asab_generate_workload(const asab_workload_spec* spec, asab_tensor** q,
                                            asab_tensor** k, asab_tensor** v);
/* Writes one report per variant into reports[0 .. n_variants). target_sparsity
 * in (0, 1) picks tau to hit that mask sparsity; otherwise cfg->tau is used. */
ASAB_API asab_status asab_run_pipeline(const asab_workload_spec* spec, const asab_attn_config* cfg,
                                       const int* variants, size_t n_variants,
                                       double target_sparsity, asab_run_report* reports);
ASAB_API asab_status asab_sweep(const asab_workload_spec* spec, const asab_attn_config* cfg,
                                const double* taus, size_t n_taus, const int* variants,
                                size_t n_variants, const char* out_csv, unsigned threads);

#ifdef __cplusplus
}
#endif

#endif /* ASABLADE_ASABLADE_H_ */
