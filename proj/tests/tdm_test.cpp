// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "asablade/error.hpp"
#include "asablade/tdm.hpp"

namespace asablade::tdm {
namespace {

constexpr double kPi = 3.14159265358979323846;

// log p_t(x) of the diffused mixture, written out directly.
double log_density(const GaussianMixtureTeacher& g, std::span<const double> x, double t,
                   const Schedule& s) {
  const double a = s.alpha(t), sg = s.sigma(t);
  double total = 0.0;
  for (const auto& c : g.components()) {
    const double var = a * a * c.std * c.std + sg * sg;
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sq += std::pow(x[i] - a * c.mean[i], 2);
    total += c.weight * std::exp(-0.5 * sq / var) / std::pow(2 * kPi * var, 0.5 * x.size());
  }
  double wsum = 0.0;
  for (const auto& c : g.components()) wsum += c.weight;
  return std::log(total / wsum);
}

TEST(Schedule, RectifiedFlowAndCosineCoefficients) {
  const auto rf = Schedule::uniform(ScheduleKind::kRectifiedFlow, 4);
  EXPECT_DOUBLE_EQ(rf.alpha(0.3), 0.7);
  EXPECT_DOUBLE_EQ(rf.sigma(0.3), 0.3);
  const auto vp = Schedule::uniform(ScheduleKind::kVpCosine, 4);
  for (double t : {0.0, 0.2, 0.5, 0.9, 1.0})
    EXPECT_NEAR(vp.alpha(t) * vp.alpha(t) + vp.sigma(t) * vp.sigma(t), 1.0, 1e-12);
  EXPECT_NEAR(vp.alpha(1.0), 0.0, 1e-12);
  EXPECT_THROW(rf.alpha(1.5), Error);
}

TEST(Schedule, UniformStagesAndBucketMidpoints) {
  const auto s = Schedule::uniform(ScheduleKind::kRectifiedFlow, 4);
  EXPECT_EQ(s.stages(), 4u);
  EXPECT_DOUBLE_EQ(s.lo(1), 0.25);
  EXPECT_DOUBLE_EQ(s.hi(1), 0.5);
  const auto b = s.bucket_times(1, 2);
  EXPECT_DOUBLE_EQ(b[0], 0.3125);
  EXPECT_DOUBLE_EQ(b[1], 0.4375);
  EXPECT_DOUBLE_EQ(s.weight(3), 1.0);
}

TEST(Schedule, IntervalsMustTileWithoutOverlap) {
  const auto ok = Schedule::from_intervals(ScheduleKind::kRectifiedFlow, {{0, 0.5}, {0.5, 1}});
  EXPECT_EQ(ok.stages(), 2u);
  EXPECT_THROW(Schedule::from_intervals(ScheduleKind::kRectifiedFlow, {{0, 0.6}, {0.5, 1}}),
               Error);
  EXPECT_THROW(Schedule::from_intervals(ScheduleKind::kRectifiedFlow, {{0, 0.4}, {0.5, 1}}),
               Error);
  EXPECT_THROW(Schedule(ScheduleKind::kRectifiedFlow, {0.0, 0.5, 0.5, 1.0}), Error);
  EXPECT_THROW(parse_schedule_kind("linear"), Error);
  EXPECT_EQ(parse_schedule_kind("vp_cosine"), ScheduleKind::kVpCosine);
}

TEST(Corruption, ForwardAndScoreRelation) {
  const auto s = Schedule::uniform(ScheduleKind::kRectifiedFlow, 1);
  const std::vector<double> x0{1.0, -2.0}, eps{0.5, 0.25};
  const auto xt = forward_corrupt(x0, 0.4, eps, s);
  EXPECT_DOUBLE_EQ(xt[0], 0.6 * 1.0 + 0.4 * 0.5);
  // With the true x0, the score is -eps / sigma.
  const auto sc = denoiser_to_score(xt, 0.4, x0, s);
  EXPECT_NEAR(sc[0], -0.5 / 0.4, 1e-12);
  EXPECT_NEAR(sc[1], -0.25 / 0.4, 1e-12);
  EXPECT_THROW(denoiser_to_score(xt, 0.0, x0, s), Error);
}

TEST(Teacher, ParsesSpecs) {
  const auto g = GaussianMixtureTeacher::parse("gauss:3,0.5", 2);
  ASSERT_EQ(g.components().size(), 1u);
  EXPECT_EQ(g.dim(), 2u);
  EXPECT_DOUBLE_EQ(g.components()[0].mean[1], 3.0);
  const auto m = GaussianMixtureTeacher::parse("mix:1,-2,0.5;3,2,0.5", 1);
  EXPECT_DOUBLE_EQ(m.mean()[0], (-2.0 + 3 * 2.0) / 4.0);
  // Var = E[var] + Var[mean] = 0.25 + (0.25*16 + 0.75*4 - 1).
  EXPECT_NEAR(m.covariance()[0], 0.25 + 0.25 * 4 + 0.75 * 4 - 1.0, 1e-12);
  EXPECT_THROW(GaussianMixtureTeacher::parse("gauss:1", 1), Error);
  EXPECT_THROW(GaussianMixtureTeacher::parse("gauss:1,-1", 1), Error);
  EXPECT_THROW(GaussianMixtureTeacher::parse("laplace:0,1", 1), Error);
}

TEST(Teacher, ScoreIsGradientOfLogDensity) {
  const auto sched = Schedule::uniform(ScheduleKind::kVpCosine, 2);
  const auto g = GaussianMixtureTeacher::parse("mix:0.3,-1,0.4;0.7,1.5,0.6", 2);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd;
  for (double t : {0.05, 0.3, 0.8}) {
    std::vector<double> x{nd(gen), nd(gen)}, sc(2);
    g.score(x, t, sched, sc);
    for (std::size_t i = 0; i < 2; ++i) {
      auto xp = x, xm = x;
      const double h = 1e-5;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (log_density(g, xp, t, sched) - log_density(g, xm, t, sched)) / (2 * h);
      EXPECT_NEAR(sc[i], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Teacher, GaussianPosteriorMeanClosedForm) {
  const auto sched = Schedule::uniform(ScheduleKind::kRectifiedFlow, 1);
  const auto g = GaussianMixtureTeacher::parse("gauss:3,0.5", 1);
  const double t = 0.6, a = 0.4, s = 0.6, x = 0.7;
  std::vector<double> out(1);
  g.posterior_mean(std::vector<double>{x}, t, sched, out);
  const double want = 3.0 + a * 0.25 / (a * a * 0.25 + s * s) * (x - a * 3.0);
  EXPECT_NEAR(out[0], want, 1e-12);
}

TEST(Denoiser, AffineFitRecoversExactMap) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  const std::size_t n = 200, d = 3;
  std::vector<double> x(n * d), y(n * d);
  const double A[9] = {1, 2, 0, -1, 0.5, 0.25, 0, 0, 3}, c[3] = {0.1, -0.2, 0.3};
  for (auto& v : x) v = nd(gen);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < d; ++i) {
      y[s * d + i] = c[i];
      for (std::size_t j = 0; j < d; ++j) y[s * d + i] += A[i * d + j] * x[s * d + j];
    }
  const AffineDenoiser f = fit_affine_denoiser(x, y, d, 0.5);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(f.a[i], A[i], 1e-9);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(f.c[i], c[i], 1e-9);
  EXPECT_LT(f.residual, 1e-18);
  EXPECT_FALSE(f.ridge);
}

TEST(Denoiser, RankDeficientDesignFallsBackToRidge) {
  const std::vector<double> x{1, 1, 1, 1}, y{2, 2, 2, 2};
  const AffineDenoiser f = fit_affine_denoiser(x, y, 1, 0.5);
  EXPECT_TRUE(f.ridge);
  std::vector<double> out(1);
  f.apply(std::vector<double>{1.0}, out);
  EXPECT_NEAR(out[0], 2.0, 1e-4);
}

TEST(Students, AffineVjpMatchesFiniteDifferences) {
  AffineStudent st(3, 2);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  for (auto& p : st.params(1)) p = nd(gen);
  const std::vector<double> z{nd(gen), nd(gen), nd(gen)}, gy{nd(gen), nd(gen), nd(gen)};
  std::vector<double> g(st.params_per_stage(), 0.0), out(3);
  st.vjp(1, z, gy, g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto p = st.params(1);
    const double keep = p[i], h = 1e-6;
    p[i] = keep + h;
    st.forward(1, z, out);
    double fp = 0.0;
    for (std::size_t c = 0; c < 3; ++c) fp += gy[c] * out[c];
    p[i] = keep - h;
    st.forward(1, z, out);
    double fm = 0.0;
    for (std::size_t c = 0; c < 3; ++c) fm += gy[c] * out[c];
    p[i] = keep;
    EXPECT_NEAR(g[i], (fp - fm) / (2 * h), 1e-6);
  }
}

TEST(Students, AttentionBackwardMatchesFiniteDifferences) {
  const AttnShape shape{6, 3, 2, 0.0};
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  std::vector<double> theta(shape.num_params()), z(shape.dim()), gy(shape.dim());
  for (auto& v : theta) v = 0.7 * nd(gen);
  for (auto& v : z) v = nd(gen);
  for (auto& v : gy) v = nd(gen);
  BlockMask mask(3, 3);
  mask.set(0, 0, true);
  mask.set(1, 0, true);
  mask.set(1, 2, true);
  mask.set(2, 1, true);
  mask.set(2, 2, true);
  const AttnCache c = masked_attention_forward(shape, theta, z, mask);
  const AttnGrad g = masked_attention_backward(shape, theta, z, mask, c, gy);
  auto objective = [&](const std::vector<double>& th, const std::vector<double>& zz) {
    const AttnCache cc = masked_attention_forward(shape, th, zz, mask);
    double s = 0.0;
    for (std::size_t i = 0; i < gy.size(); ++i) s += gy[i] * cc.y[i];
    return s;
  };
  const double h = 1e-5;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const double fd = (objective(tp, z) - objective(tm, z)) / (2 * h);
    EXPECT_NEAR(g.theta[i], fd, 1e-7 + 1e-5 * std::abs(fd)) << "theta " << i;
  }
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    const double fd = (objective(theta, zp) - objective(theta, zm)) / (2 * h);
    EXPECT_NEAR(g.z[i], fd, 1e-7 + 1e-5 * std::abs(fd)) << "z " << i;
  }
}

TEST(Students, MaskedAttentionRowsIgnoreDroppedKeys) {
  const AttnShape shape{4, 1, 2, 1.0};
  const AttnParamLayout L(shape);
  std::vector<double> theta(shape.num_params(), 0.0);
  theta[L.wq] = theta[L.wk] = theta[L.wv] = theta[L.wo] = 1.0;
  const std::vector<double> z{1.0, 2.0, 100.0, 200.0};
  BlockMask mask(2, 2);
  mask.set(0, 0, true);
  mask.set(1, 1, true);
  const AttnCache c = masked_attention_forward(shape, theta, z, mask);
  EXPECT_EQ(c.p[0 * 4 + 2], 0.0);
  EXPECT_EQ(c.p[0 * 4 + 3], 0.0);
  const double p1 = 1.0 / (1.0 + std::exp(-1.0));  // query 1, keys 1 and 2
  EXPECT_NEAR(c.y[0], 1.0 + (1 - p1) * 1.0 + p1 * 2.0, 1e-12);
}

TEST(Students, AttentionStudentMaskComesFromImportance) {
  const AttnShape shape{8, 2, 2, 0.0};
  AttnConfig cfg;
  cfg.tau = 1.0;
  cfg.min_keep = 0.0;
  const AttnStudent st(shape, 1, cfg, RngStream(1));
  std::vector<double> z(shape.dim(), 0.3);
  const BlockMask m = attention_student_mask(shape, st.params(0), z, cfg);
  EXPECT_EQ(m.kept_total(), 16u);  // tau = 1 keeps every positive block
  EXPECT_THROW(AttnStudent(AttnShape{65, 2, 2, 0.0}, 1, cfg, RngStream(1)), Error);
}

TEST(Trajectory, TeacherOptimumReproducesTeacherLaw) {
  for (auto kind : {ScheduleKind::kRectifiedFlow, ScheduleKind::kVpCosine}) {
    const auto sched = Schedule::uniform(kind, 4);
    const auto g = GaussianMixtureTeacher::parse("gauss:3,0.5", 2);
    const AffineStudent st = AffineStudent::teacher_optimum(g, sched);
    const Trajectory tr = run_trajectory(st, sched, 40000, RngStream(2));
    const MomentError e = moment_error(tr.sample(), 2, g);
    EXPECT_LT(e.mean_err, 0.01);
    EXPECT_LT(e.cov_err, 0.03);
    ASSERT_EQ(tr.inputs.size(), 4u);
  }
}

TEST(Trajectory, GradientVanishesAtTeacherOptimum) {
  const auto sched = Schedule::uniform(ScheduleKind::kRectifiedFlow, 4);
  const auto g = GaussianMixtureTeacher::parse("gauss:3,0.5", 1);
  const AffineStudent opt = AffineStudent::teacher_optimum(g, sched);
  AffineStudent off(1, 4);
  const Trajectory fit = run_trajectory(opt, sched, 200000, RngStream(3));
  const FakeScoreModel fake = train_fake_score(fit.outputs, 1, sched, 4, RngStream(4));
  const Trajectory tr = run_trajectory(opt, sched, 20000, RngStream(5));
  const Trajectory tr_off = run_trajectory(off, sched, 20000, RngStream(5));
  const Trajectory fit_off = run_trajectory(off, sched, 200000, RngStream(3));
  const FakeScoreModel fake_off = train_fake_score(fit_off.outputs, 1, sched, 4, RngStream(4));
  const auto g_opt = tdm_gradient(opt, 0, tr.inputs[0], tr.outputs[0], fake, g, sched,
                                  RngStream(6));
  const auto g_off = tdm_gradient(off, 0, tr_off.inputs[0], tr_off.outputs[0], fake_off, g,
                                  sched, RngStream(6));
  // Bias u: the identity student sits near mean 0, far below the teacher at 3.
  EXPECT_LT(std::abs(g_opt[1]), 0.1 * std::abs(g_off[1]));
  EXPECT_LT(g_off[1], 0.0);
}

TEST(Distill, ShortRunMovesTowardTeacher) {
  const auto sched = Schedule::uniform(ScheduleKind::kRectifiedFlow, 4);
  const auto g = GaussianMixtureTeacher::parse("gauss:3,0.5", 1);
  AffineStudent st(1, 4);
  DistillConfig cfg;
  cfg.iters = 150;
  cfg.trace_every = 50;
  cfg.seed = 1;
  const DistillResult r = distill(g, st, sched, cfg);
  ASSERT_FALSE(r.diverged);
  ASSERT_EQ(r.trace.size(), 4u);
  EXPECT_EQ(r.trace.back().iter, 149u);
  EXPECT_LT(r.trace.back().mean_err, 0.5 * r.trace.front().mean_err);
}

TEST(Distill, DeterministicForSeed) {
  const auto sched = Schedule::uniform(ScheduleKind::kRectifiedFlow, 2);
  const auto g = GaussianMixtureTeacher::parse("gauss:1,1", 1);
  DistillConfig cfg;
  cfg.iters = 20;
  cfg.final_batch = 1000;
  AffineStudent a(1, 2), b(1, 2);
  EXPECT_EQ(distill(g, a, sched, cfg).sample_mean, distill(g, b, sched, cfg).sample_mean);
}

TEST(Distill, LargeStepIsReportedAsDivergence) {
  const auto sched = Schedule::uniform(ScheduleKind::kRectifiedFlow, 4);
  const auto g = GaussianMixtureTeacher::parse("gauss:0,1", 1);
  AffineStudent st(1, 4);
  DistillConfig cfg;
  cfg.iters = 100;
  cfg.lr = 5.0;
  const DistillResult r = distill(g, st, sched, cfg);
  EXPECT_TRUE(r.diverged);
  EXPECT_TRUE(r.sample_mean.empty());
  EXPECT_FALSE(r.trace.empty());
}

TEST(Distill, MomentErrorHandCase) {
  const auto g = GaussianMixtureTeacher::parse("gauss:1,1", 1);
  const std::vector<double> x{0.0, 2.0};  // mean 1, unbiased variance 2
  const MomentError e = moment_error(x, 1, g);
  EXPECT_DOUBLE_EQ(e.mean_err, 0.0);
  EXPECT_DOUBLE_EQ(e.cov_err, 1.0);
}

}  // namespace
}  // namespace asablade::tdm
