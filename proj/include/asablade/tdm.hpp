// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "asablade/config.hpp"
#include "asablade/maskgen.hpp"
#include "asablade/rng.hpp"

// Toy trajectory distribution matching. Samples are flat double vectors; a
// batch of n samples of dimension D is stored row-major as n * D values.
namespace asablade::tdm {

enum class ScheduleKind { kRectifiedFlow, kVpCosine };

class Schedule {
 public:
  /// `bounds` are t_0 < ... < t_K inside [0, 1]; stage i covers [t_i, t_{i+1}).
  Schedule(ScheduleKind kind, std::vector<double> bounds);
  static Schedule uniform(ScheduleKind kind, std::size_t stages);
  /// Stages given as [lo, hi) pairs in order. Overlapping or gapped intervals
  /// are rejected: one fake score model serves the whole trajectory.
  static Schedule from_intervals(ScheduleKind kind,
                                 const std::vector<std::pair<double, double>>& intervals);

  ScheduleKind kind() const { return kind_; }
  std::size_t stages() const { return bounds_.size() - 1; }
  const std::vector<double>& bounds() const { return bounds_; }
  double lo(std::size_t stage) const { return bounds_[stage]; }
  double hi(std::size_t stage) const { return bounds_[stage + 1]; }
  double weight(std::size_t stage) const { return weights_[stage]; }

  double alpha(double t) const;
  double sigma(double t) const;

  /// Midpoints of `buckets` equal sub-intervals of stage `stage`.
  std::vector<double> bucket_times(std::size_t stage, std::size_t buckets) const;

 private:
  ScheduleKind kind_;
  std::vector<double> bounds_;
  std::vector<double> weights_;  // all 1
};

ScheduleKind parse_schedule_kind(const std::string& s);

/// alpha_t * x0 + sigma_t * eps.
std::vector<double> forward_corrupt(std::span<const double> x0, double t,
                                    std::span<const double> eps, const Schedule& sched);

/// -(x_t - alpha_t * x0_hat) / sigma_t^2.
std::vector<double> denoiser_to_score(std::span<const double> xt, double t,
                                      std::span<const double> x0_hat, const Schedule& sched);

/// Isotropic Gaussian mixture in D dimensions. Its diffused marginals are
/// mixtures too, so score and posterior mean are closed form.
class GaussianMixtureTeacher {
 public:
  struct Component {
    double weight = 1.0;
    std::vector<double> mean;  // size D
    double std = 1.0;
  };

  GaussianMixtureTeacher(std::vector<Component> comps);
  /// "gauss:m,s" or "mix:w,m,s;w,m,s;..." with scalar means broadcast to `dim`.
  static GaussianMixtureTeacher parse(const std::string& spec, std::size_t dim);

  std::size_t dim() const { return comps_.front().mean.size(); }
  const std::vector<Component>& components() const { return comps_; }

  void score(std::span<const double> x, double t, const Schedule& sched,
             std::span<double> out) const;
  void posterior_mean(std::span<const double> x, double t, const Schedule& sched,
                      std::span<double> out) const;

  std::vector<double> mean() const;
  std::vector<double> covariance() const;  // D x D row-major

 private:
  void responsibilities(std::span<const double> x, double t, const Schedule& sched,
                        std::vector<double>& r) const;
  std::vector<Component> comps_;
};

/// x0_hat = A x + c, fitted by least squares at one diffusion time.
struct AffineDenoiser {
  std::size_t dim = 0;
  double time = 0.0;
  std::vector<double> a;  // D x D row-major
  std::vector<double> c;
  double residual = 0.0;  // mean squared error per coordinate on the fit set
  bool ridge = false;     // design was rank deficient, fitted with 1e-6 damping

  void apply(std::span<const double> x, std::span<double> out) const;
};

/// Least squares fit of targets on [noisy, 1]. Both are n x dim row-major.
AffineDenoiser fit_affine_denoiser(std::span<const double> noisy, std::span<const double> targets,
                                   std::size_t dim, double time);

/// Fake score: one affine denoiser per (stage, bucket).
struct FakeScoreModel {
  std::size_t stages = 0;
  std::size_t buckets = 0;
  std::vector<AffineDenoiser> denoisers;  // stage-major

  const AffineDenoiser& at(std::size_t stage, std::size_t bucket) const {
    return denoisers[stage * buckets + bucket];
  }
  double mean_residual() const;
  bool any_ridge() const;
  void score(std::size_t stage, std::size_t bucket, std::span<const double> x,
             const Schedule& sched, std::span<double> out) const;
};

/// Fits the fake model from per-stage clean student outputs. Each sample is
/// re-corrupted once, at a bucket drawn uniformly per sample.
FakeScoreModel train_fake_score(const std::vector<std::vector<double>>& stage_outputs,
                                std::size_t dim, const Schedule& sched, std::size_t buckets,
                                RngStream rng);

/// Per-stage generator x0_hat = G_i(x_in; theta_i).
class Student {
 public:
  virtual ~Student() = default;
  virtual std::size_t dim() const = 0;
  virtual std::size_t stages() const = 0;
  virtual std::size_t params_per_stage() const = 0;
  virtual std::span<double> params(std::size_t stage) = 0;
  virtual std::span<const double> params(std::size_t stage) const = 0;
  virtual void forward(std::size_t stage, std::span<const double> z,
                       std::span<double> out) const = 0;
  /// Adds (d out / d theta_stage)^T * gout into `gparams`.
  virtual void vjp(std::size_t stage, std::span<const double> z, std::span<const double> gout,
                   std::span<double> gparams) const = 0;
};

/// x0_hat = W z + u per stage; initialized to W = I, u = 0.
class AffineStudent final : public Student {
 public:
  AffineStudent(std::size_t dim, std::size_t stages);

  /// Per-stage parameters mapping every stage output to the teacher law, for a
  /// single-component teacher.
  static AffineStudent teacher_optimum(const GaussianMixtureTeacher& teacher,
                                       const Schedule& sched);

  std::size_t dim() const override { return dim_; }
  std::size_t stages() const override { return stages_; }
  std::size_t params_per_stage() const override { return dim_ * dim_ + dim_; }
  std::span<double> params(std::size_t stage) override;
  std::span<const double> params(std::size_t stage) const override;
  void forward(std::size_t stage, std::span<const double> z, std::span<double> out) const override;
  void vjp(std::size_t stage, std::span<const double> z, std::span<const double> gout,
           std::span<double> gparams) const override;

 private:
  std::size_t dim_, stages_;
  std::vector<double> theta_;  // per stage: W (D x D), then u (D)
};

/// Shape of the attention student: T tokens of width d.
struct AttnShape {
  std::size_t tokens = 8;
  std::size_t width = 2;
  std::size_t block = 2;  // tokens per mask block
  double scale = 0.0;     // 0 means 1/sqrt(width)

  std::size_t dim() const { return tokens * width; }
  std::size_t num_params() const { return 4 * width * width + tokens * width; }
  double effective_scale() const;
};

/// Parameter offsets inside one stage's theta: Wq, Wk, Wv, Wo (d x d each),
/// then U (T x d).
struct AttnParamLayout {
  std::size_t wq, wk, wv, wo, u, end;
  explicit AttnParamLayout(const AttnShape& s);
};

/// Intermediates of Y = (Z + P V) Wo + U with P = masked softmax(scale Q K^T),
/// Q = Z Wq, K = Z Wk, V = Z Wv. All matrices row-major.
struct AttnCache {
  std::vector<double> q, k, v, p, a, h, y;
};

struct AttnGrad {
  std::vector<double> theta;   // same layout as the parameters
  std::vector<double> q, k, v; // gradients of the projected activations
  std::vector<double> z;       // gradient of the input tokens
};

AttnCache masked_attention_forward(const AttnShape& shape, std::span<const double> theta,
                                   std::span<const double> z, const BlockMask& mask);

/// Exact VJP of Y with respect to theta, q, k, v and z. Masked logits carry no
/// gradient.
AttnGrad masked_attention_backward(const AttnShape& shape, std::span<const double> theta,
                                   std::span<const double> z, const BlockMask& mask,
                                   const AttnCache& cache, std::span<const double> gy);

/// Threshold mask for one input, from the dense block importance of its Q, K.
BlockMask attention_student_mask(const AttnShape& shape, std::span<const double> theta,
                                 std::span<const double> z, const AttnConfig& cfg);

class AttnStudent final : public Student {
 public:
  AttnStudent(AttnShape shape, std::size_t stages, AttnConfig mask_cfg, RngStream init);

  const AttnShape& shape() const { return shape_; }
  const AttnConfig& mask_config() const { return cfg_; }

  std::size_t dim() const override { return shape_.dim(); }
  std::size_t stages() const override { return stages_; }
  std::size_t params_per_stage() const override { return shape_.num_params(); }
  std::span<double> params(std::size_t stage) override;
  std::span<const double> params(std::size_t stage) const override;
  void forward(std::size_t stage, std::span<const double> z, std::span<double> out) const override;
  void vjp(std::size_t stage, std::span<const double> z, std::span<const double> gout,
           std::span<double> gparams) const override;

 private:
  AttnShape shape_;
  std::size_t stages_;
  AttnConfig cfg_;
  std::vector<double> theta_;
};

/// Stage inputs and outputs of one deterministic trajectory batch.
struct Trajectory {
  std::vector<std::vector<double>> inputs;   // inputs[i] = x_{t_{i+1}}
  std::vector<std::vector<double>> outputs;  // outputs[i] = x0_hat of stage i
  const std::vector<double>& sample() const { return outputs.front(); }
};

/// Starts from standard normal noise at t_K and runs stages K-1 .. 0, moving
/// between stages with a deterministic DDIM step.
Trajectory run_trajectory(const Student& student, const Schedule& sched, std::size_t n,
                          RngStream rng);

/// Batch-mean TDM gradient for one stage's parameters. `inputs` and `outputs`
/// are that stage's trajectory slices; the re-corruption draws use `rng`.
std::vector<double> tdm_gradient(const Student& student, std::size_t stage,
                                 std::span<const double> inputs, std::span<const double> outputs,
                                 const FakeScoreModel& fake,
                                 const GaussianMixtureTeacher& teacher, const Schedule& sched,
                                 RngStream rng);

struct DistillConfig {
  std::size_t buckets = 4;      // discrete re-corruption times per stage
  std::size_t iters = 2000;
  std::size_t batch = 512;       // gradient batch
  std::size_t fake_batch = 4096; // fake score fit batch
  std::size_t eval_batch = 2048;
  std::size_t final_batch = 20000;  // samples behind sample_mean / sample_std
  std::size_t trace_every = 1;
  double lr = 1e-2;
  double divergence_factor = 10.0;
  std::uint64_t seed = 0;
};

struct TraceRow {
  std::size_t iter = 0;
  double mean_err = 0.0;  // ||mean - teacher mean|| / sqrt(D)
  double cov_err = 0.0;   // ||cov - teacher cov||_F / ||teacher cov||_F
  double fake_residual = 0.0;
  double grad_norm = 0.0;
};

struct DistillResult {
  std::vector<TraceRow> trace;
  std::vector<double> sample_mean;  // per coordinate, final evaluation batch
  std::vector<double> sample_std;
  bool diverged = false;
};

struct MomentError {
  double mean_err = 0.0;
  double cov_err = 0.0;
};
MomentError moment_error(std::span<const double> samples, std::size_t dim,
                         const GaussianMixtureTeacher& teacher);

/// Alternates fake-score fitting and a gradient step on every stage. Stops
/// early, with diverged set, once mean_err + cov_err exceeds
/// divergence_factor times its initial value (floored at 0.05).
DistillResult distill(const GaussianMixtureTeacher& teacher, Student& student,
                      const Schedule& sched, const DistillConfig& cfg);

}  // namespace asablade::tdm
