// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/tdm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "asablade/error.hpp"
#include "asablade/prober.hpp"

namespace asablade::tdm {

// ---------------------------------------------------------------- schedule

Schedule::Schedule(ScheduleKind kind, std::vector<double> bounds)
    : kind_(kind), bounds_(std::move(bounds)) {
  require(bounds_.size() >= 2, "schedule needs at least one stage");
  for (std::size_t i = 0; i < bounds_.size(); ++i) {
    require(bounds_[i] >= 0.0 && bounds_[i] <= 1.0, "stage boundaries must lie in [0, 1]");
    if (i > 0)
      require(bounds_[i] > bounds_[i - 1],
              "stage boundaries must be strictly increasing (stages may not overlap)");
  }
  weights_.assign(stages(), 1.0);
}

Schedule Schedule::uniform(ScheduleKind kind, std::size_t stages) {
  require(stages >= 1, "schedule needs at least one stage");
  std::vector<double> b(stages + 1);
  for (std::size_t i = 0; i <= stages; ++i) b[i] = double(i) / double(stages);
  return Schedule(kind, std::move(b));
}

Schedule Schedule::from_intervals(ScheduleKind kind,
                                  const std::vector<std::pair<double, double>>& intervals) {
  require(!intervals.empty(), "schedule needs at least one stage");
  std::vector<double> b{intervals.front().first};
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const auto [lo, hi] = intervals[i];
    require(lo < hi, "stage interval must have lo < hi");
    if (i > 0) {
      require(lo >= intervals[i - 1].second,
              "stage intervals overlap at stage " + std::to_string(i));
      require(lo == intervals[i - 1].second, "stage intervals leave a gap at stage " +
                                                 std::to_string(i));
    }
    b.push_back(hi);
  }
  return Schedule(kind, std::move(b));
}

double Schedule::alpha(double t) const {
  require(t >= 0.0 && t <= 1.0, "diffusion time must lie in [0, 1]");
  if (kind_ == ScheduleKind::kRectifiedFlow) return 1.0 - t;
  return std::cos(0.5 * std::numbers::pi * t);
}

double Schedule::sigma(double t) const {
  require(t >= 0.0 && t <= 1.0, "diffusion time must lie in [0, 1]");
  if (kind_ == ScheduleKind::kRectifiedFlow) return t;
  return std::sin(0.5 * std::numbers::pi * t);
}

std::vector<double> Schedule::bucket_times(std::size_t stage, std::size_t buckets) const {
  require(stage < stages(), "stage index out of range");
  require(buckets >= 1, "need at least one bucket");
  std::vector<double> t(buckets);
  const double w = (hi(stage) - lo(stage)) / double(buckets);
  for (std::size_t q = 0; q < buckets; ++q) t[q] = lo(stage) + (double(q) + 0.5) * w;
  return t;
}

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "rectified_flow") return ScheduleKind::kRectifiedFlow;
  if (s == "vp_cosine") return ScheduleKind::kVpCosine;
  fail_validation("unknown schedule '" + s + "' (expected rectified_flow or vp_cosine)");
}

std::vector<double> forward_corrupt(std::span<const double> x0, double t,
                                    std::span<const double> eps, const Schedule& sched) {
  require(x0.size() == eps.size(), "forward_corrupt: x0 and eps sizes differ");
  const double a = sched.alpha(t), s = sched.sigma(t);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

std::vector<double> denoiser_to_score(std::span<const double> xt, double t,
                                      std::span<const double> x0_hat, const Schedule& sched) {
  require(xt.size() == x0_hat.size(), "denoiser_to_score: size mismatch");
  const double a = sched.alpha(t), s = sched.sigma(t);
  require(s > 0.0, "denoiser_to_score: sigma_t is zero at t=" + std::to_string(t));
  std::vector<double> out(xt.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -(xt[i] - a * x0_hat[i]) / (s * s);
  return out;
}

// ---------------------------------------------------------------- teacher

GaussianMixtureTeacher::GaussianMixtureTeacher(std::vector<Component> comps)
    : comps_(std::move(comps)) {
  require(!comps_.empty(), "teacher needs at least one component");
  const std::size_t d = comps_.front().mean.size();
  require(d >= 1, "teacher dimension must be >= 1");
  double total = 0.0;
  for (const auto& c : comps_) {
    require(c.mean.size() == d, "teacher components differ in dimension");
    require(c.weight > 0.0 && std::isfinite(c.weight), "teacher weights must be positive");
    require(c.std > 0.0 && std::isfinite(c.std), "teacher std must be positive");
    total += c.weight;
  }
  for (auto& c : comps_) c.weight /= total;
}

GaussianMixtureTeacher GaussianMixtureTeacher::parse(const std::string& spec, std::size_t dim) {
  require(dim >= 1, "teacher dimension must be >= 1");
  const auto colon = spec.find(':');
  require(colon != std::string::npos, "teacher spec needs 'gauss:m,s' or 'mix:w,m,s;...'");
  const std::string kind = spec.substr(0, colon), body = spec.substr(colon + 1);
  auto numbers = [&](const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        require(used == tok.size(), "");
      } catch (const std::exception&) {
        fail_validation("bad number '" + tok + "' in teacher spec '" + spec + "'");
      }
    }
    return v;
  };
  std::vector<Component> comps;
  if (kind == "gauss") {
    const auto v = numbers(body);
    require(v.size() == 2, "gauss teacher takes exactly 'mean,std'");
    comps.push_back({1.0, std::vector<double>(dim, v[0]), v[1]});
  } else if (kind == "mix") {
    std::stringstream ss(body);
    std::string part;
    while (std::getline(ss, part, ';')) {
      const auto v = numbers(part);
      require(v.size() == 3, "mix components take 'weight,mean,std'");
      comps.push_back({v[0], std::vector<double>(dim, v[1]), v[2]});
    }
  } else {
    fail_validation("unknown teacher kind '" + kind + "'");
  }
  return GaussianMixtureTeacher(std::move(comps));
}

void GaussianMixtureTeacher::responsibilities(std::span<const double> x, double t,
                                              const Schedule& sched,
                                              std::vector<double>& r) const {
  const double a = sched.alpha(t), s = sched.sigma(t);
  r.resize(comps_.size());
  if (comps_.size() == 1) {
    r[0] = 1.0;
    return;
  }
  double mx = -INFINITY;
  for (std::size_t c = 0; c < comps_.size(); ++c) {
    const auto& comp = comps_[c];
    const double var = a * a * comp.std * comp.std + s * s;
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - a * comp.mean[i];
      sq += d * d;
    }
    r[c] = std::log(comp.weight) - 0.5 * double(x.size()) * std::log(var) - 0.5 * sq / var;
    mx = std::max(mx, r[c]);
  }
  double total = 0.0;
  for (auto& v : r) total += (v = std::exp(v - mx));
  for (auto& v : r) v /= total;
}

void GaussianMixtureTeacher::score(std::span<const double> x, double t, const Schedule& sched,
                                   std::span<double> out) const {
  require(x.size() == dim() && out.size() == dim(), "teacher score: dimension mismatch");
  const double a = sched.alpha(t), s = sched.sigma(t);
  std::vector<double> r;
  responsibilities(x, t, sched, r);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t c = 0; c < comps_.size(); ++c) {
    const double var = a * a * comps_[c].std * comps_[c].std + s * s;
    require(var > 0.0, "teacher score: zero marginal variance");
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] -= r[c] * (x[i] - a * comps_[c].mean[i]) / var;
  }
}

void GaussianMixtureTeacher::posterior_mean(std::span<const double> x, double t,
                                            const Schedule& sched, std::span<double> out) const {
  require(x.size() == dim() && out.size() == dim(), "teacher posterior: dimension mismatch");
  const double a = sched.alpha(t), s = sched.sigma(t);
  std::vector<double> r;
  responsibilities(x, t, sched, r);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t c = 0; c < comps_.size(); ++c) {
    const double v0 = comps_[c].std * comps_[c].std;
    const double gain = a * v0 / (a * a * v0 + s * s);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double m = comps_[c].mean[i];
      out[i] += r[c] * (m + gain * (x[i] - a * m));
    }
  }
}

std::vector<double> GaussianMixtureTeacher::mean() const {
  std::vector<double> mu(dim(), 0.0);
  for (const auto& c : comps_)
    for (std::size_t i = 0; i < dim(); ++i) mu[i] += c.weight * c.mean[i];
  return mu;
}

std::vector<double> GaussianMixtureTeacher::covariance() const {
  const std::size_t d = dim();
  const auto mu = mean();
  std::vector<double> cov(d * d, 0.0);
  for (const auto& c : comps_) {
    for (std::size_t i = 0; i < d; ++i) {
      cov[i * d + i] += c.weight * c.std * c.std;
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += c.weight * c.mean[i] * c.mean[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) cov[i * d + j] -= mu[i] * mu[j];
  return cov;
}

// ---------------------------------------------------------------- fake score

void AffineDenoiser::apply(std::span<const double> x, std::span<double> out) const {
  for (std::size_t r = 0; r < dim; ++r) {
    double acc = c[r];
    for (std::size_t k = 0; k < dim; ++k) acc += a[r * dim + k] * x[k];
    out[r] = acc;
  }
}

AffineDenoiser fit_affine_denoiser(std::span<const double> noisy, std::span<const double> targets,
                                   std::size_t dim, double time) {
  require(dim >= 1, "denoiser dimension must be >= 1");
  require(noisy.size() == targets.size() && noisy.size() % dim == 0,
          "denoiser fit: noisy and target batches differ in shape");
  const std::size_t n = noisy.size() / dim;
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mat x(n, dim + 1), y(n, dim);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < dim; ++k) {
      x(s, k) = noisy[s * dim + k];
      y(s, k) = targets[s * dim + k];
    }
    x(s, dim) = 1.0;
  }

  AffineDenoiser den;
  den.dim = dim;
  den.time = time;
  Eigen::MatrixXd coef;
  bool solved = false;
  if (n >= dim + 1) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() == Eigen::Index(dim + 1)) {
      coef = qr.solve(Eigen::MatrixXd(y));
      solved = true;
    }
  }
  if (!solved) {
    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += 1e-6;
    coef = gram.ldlt().solve(x.transpose() * y);
    den.ridge = true;
  }
  den.a.resize(dim * dim);
  den.c.resize(dim);
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t k = 0; k < dim; ++k) den.a[r * dim + k] = coef(k, r);
    den.c[r] = coef(dim, r);
  }
  if (n > 0) den.residual = (x * coef - y).squaredNorm() / double(n * dim);
  return den;
}

double FakeScoreModel::mean_residual() const {
  if (denoisers.empty()) return 0.0;
  double s = 0.0;
  for (const auto& d : denoisers) s += d.residual;
  return s / double(denoisers.size());
}

bool FakeScoreModel::any_ridge() const {
  return std::any_of(denoisers.begin(), denoisers.end(), [](const auto& d) { return d.ridge; });
}

void FakeScoreModel::score(std::size_t stage, std::size_t bucket, std::span<const double> x,
                           const Schedule& sched, std::span<double> out) const {
  const AffineDenoiser& den = at(stage, bucket);
  const double a = sched.alpha(den.time), s = sched.sigma(den.time);
  den.apply(x, out);
  for (std::size_t i = 0; i < den.dim; ++i) out[i] = -(x[i] - a * out[i]) / (s * s);
}

FakeScoreModel train_fake_score(const std::vector<std::vector<double>>& stage_outputs,
                                std::size_t dim, const Schedule& sched, std::size_t buckets,
                                RngStream rng) {
  require(stage_outputs.size() == sched.stages(), "fake score: one sample set per stage");
  require(buckets >= 1, "fake score: need at least one bucket");
  FakeScoreModel model;
  model.stages = sched.stages();
  model.buckets = buckets;
  for (std::size_t i = 0; i < sched.stages(); ++i) {
    const auto& clean = stage_outputs[i];
    require(!clean.empty() && clean.size() % dim == 0,
            "fake score: stage " + std::to_string(i) + " has no samples");
    const std::size_t n = clean.size() / dim;
    const auto times = sched.bucket_times(i, buckets);
    std::vector<std::vector<double>> noisy(buckets), target(buckets);
    RngStream r = rng.split(i);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t q = r.uniform_index(buckets);
      const double a = sched.alpha(times[q]), sg = sched.sigma(times[q]);
      for (std::size_t k = 0; k < dim; ++k) {
        const double x0 = clean[s * dim + k];
        noisy[q].push_back(a * x0 + sg * r.normal());
        target[q].push_back(x0);
      }
    }
    for (std::size_t q = 0; q < buckets; ++q)
      model.denoisers.push_back(fit_affine_denoiser(noisy[q], target[q], dim, times[q]));
  }
  return model;
}

// ---------------------------------------------------------------- affine student

AffineStudent::AffineStudent(std::size_t dim, std::size_t stages)
    : dim_(dim), stages_(stages), theta_(stages * (dim * dim + dim), 0.0) {
  require(dim >= 1 && stages >= 1, "affine student needs dim >= 1 and stages >= 1");
  for (std::size_t s = 0; s < stages; ++s)
    for (std::size_t i = 0; i < dim; ++i) params(s)[i * dim + i] = 1.0;
}

AffineStudent AffineStudent::teacher_optimum(const GaussianMixtureTeacher& teacher,
                                             const Schedule& sched) {
  require(teacher.components().size() == 1, "teacher_optimum needs a single Gaussian teacher");
  const auto& comp = teacher.components().front();
  const std::size_t d = teacher.dim(), k = sched.stages();
  AffineStudent st(d, k);
  // Every stage input is a * z + b coordinatewise, with z standard normal.
  double a = 1.0;
  std::vector<double> b(d, 0.0);
  for (std::size_t i = k; i-- > 0;) {
    auto p = st.params(i);
    const double w = comp.std / a;
    for (std::size_t c = 0; c < d; ++c) {
      p[c * d + c] = w;
      p[d * d + c] = comp.mean[c] - w * b[c];
    }
    const double a_in = sched.alpha(sched.hi(i)), s_in = sched.sigma(sched.hi(i));
    const double a_out = sched.alpha(sched.lo(i)), s_out = sched.sigma(sched.lo(i));
    for (std::size_t c = 0; c < d; ++c)
      b[c] = a_out * comp.mean[c] + s_out * (b[c] - a_in * comp.mean[c]) / s_in;
    a = a_out * comp.std + s_out * (a - a_in * comp.std) / s_in;
  }
  return st;
}

std::span<double> AffineStudent::params(std::size_t stage) {
  return {theta_.data() + stage * params_per_stage(), params_per_stage()};
}

std::span<const double> AffineStudent::params(std::size_t stage) const {
  return {theta_.data() + stage * params_per_stage(), params_per_stage()};
}

void AffineStudent::forward(std::size_t stage, std::span<const double> z,
                            std::span<double> out) const {
  const auto p = params(stage);
  for (std::size_t r = 0; r < dim_; ++r) {
    double acc = p[dim_ * dim_ + r];
    for (std::size_t c = 0; c < dim_; ++c) acc += p[r * dim_ + c] * z[c];
    out[r] = acc;
  }
}

void AffineStudent::vjp(std::size_t, std::span<const double> z, std::span<const double> gout,
                        std::span<double> gparams) const {
  for (std::size_t r = 0; r < dim_; ++r) {
    for (std::size_t c = 0; c < dim_; ++c) gparams[r * dim_ + c] += gout[r] * z[c];
    gparams[dim_ * dim_ + r] += gout[r];
  }
}

// ---------------------------------------------------------------- attention student

double AttnShape::effective_scale() const {
  return scale > 0.0 ? scale : 1.0 / std::sqrt(double(width));
}

AttnParamLayout::AttnParamLayout(const AttnShape& s) {
  const std::size_t dd = s.width * s.width;
  wq = 0;
  wk = dd;
  wv = 2 * dd;
  wo = 3 * dd;
  u = 4 * dd;
  end = u + s.tokens * s.width;
}

namespace {

// out (n x m) = x (n x k) * w (k x m)
void mat_mul(const double* x, const double* w, double* out, std::size_t n, std::size_t k,
             std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += x[i * k + l] * w[l * m + j];
      out[i * m + j] = acc;
    }
}

// out (k x m) += x^T * g, with x (n x k) and g (n x m)
void add_xt_g(const double* x, const double* g, double* out, std::size_t n, std::size_t k,
              std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t j = 0; j < m; ++j) out[l * m + j] += x[i * k + l] * g[i * m + j];
}

// out (n x k) += g (n x m) * w^T, with w (k x m)
void add_g_wt(const double* g, const double* w, double* out, std::size_t n, std::size_t k,
              std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * w[l * m + j];
      out[i * k + l] += acc;
    }
}

void check_attn_args(const AttnShape& s, std::span<const double> theta,
                     std::span<const double> z, const BlockMask& mask) {
  require(s.tokens >= 1 && s.width >= 1 && s.block >= 1, "attention student: empty shape");
  require(theta.size() == s.num_params(), "attention student: parameter count mismatch");
  require(z.size() == s.dim(), "attention student: input size mismatch");
  const std::size_t nb = num_blocks(s.tokens, s.block);
  require(mask.rows() == nb && mask.cols() == nb, "attention student: mask shape mismatch");
  for (std::size_t i = 0; i < nb; ++i)
    require(mask.kept_in_row(i) > 0, "attention student: mask row keeps no blocks");
}

}  // namespace

AttnCache masked_attention_forward(const AttnShape& shape, std::span<const double> theta,
                                   std::span<const double> z, const BlockMask& mask) {
  check_attn_args(shape, theta, z, mask);
  const std::size_t t = shape.tokens, d = shape.width, b = shape.block;
  const AttnParamLayout L(shape);
  const double scale = shape.effective_scale();
  AttnCache c;
  c.q.resize(t * d);
  c.k.resize(t * d);
  c.v.resize(t * d);
  mat_mul(z.data(), theta.data() + L.wq, c.q.data(), t, d, d);
  mat_mul(z.data(), theta.data() + L.wk, c.k.data(), t, d, d);
  mat_mul(z.data(), theta.data() + L.wv, c.v.data(), t, d, d);

  c.p.assign(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < t; ++j) {
      if (!mask.kept(i / b, j / b)) continue;
      double s = 0.0;
      for (std::size_t e = 0; e < d; ++e) s += c.q[i * d + e] * c.k[j * d + e];
      c.p[i * t + j] = s * scale;
      mx = std::max(mx, s * scale);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      if (!mask.kept(i / b, j / b)) continue;
      sum += (c.p[i * t + j] = std::exp(c.p[i * t + j] - mx));
    }
    for (std::size_t j = 0; j < t; ++j) c.p[i * t + j] /= sum;
  }
  c.a.resize(t * d);
  mat_mul(c.p.data(), c.v.data(), c.a.data(), t, t, d);
  c.h.resize(t * d);
  for (std::size_t i = 0; i < t * d; ++i) c.h[i] = z[i] + c.a[i];
  c.y.resize(t * d);
  mat_mul(c.h.data(), theta.data() + L.wo, c.y.data(), t, d, d);
  for (std::size_t i = 0; i < t * d; ++i) c.y[i] += theta[L.u + i];
  return c;
}

AttnGrad masked_attention_backward(const AttnShape& shape, std::span<const double> theta,
                                   std::span<const double> z, const BlockMask& mask,
                                   const AttnCache& c, std::span<const double> gy) {
  check_attn_args(shape, theta, z, mask);
  require(gy.size() == shape.dim(), "attention student: output gradient size mismatch");
  const std::size_t t = shape.tokens, d = shape.width;
  const AttnParamLayout L(shape);
  const double scale = shape.effective_scale();
  AttnGrad g;
  g.theta.assign(L.end, 0.0);
  g.q.assign(t * d, 0.0);
  g.k.assign(t * d, 0.0);
  g.v.assign(t * d, 0.0);
  g.z.assign(t * d, 0.0);

  add_xt_g(c.h.data(), gy.data(), g.theta.data() + L.wo, t, d, d);
  for (std::size_t i = 0; i < t * d; ++i) g.theta[L.u + i] = gy[i];
  std::vector<double> gh(t * d, 0.0);
  add_g_wt(gy.data(), theta.data() + L.wo, gh.data(), t, d, d);

  // a = p v: gp = gh v^T, gv = p^T gh.
  std::vector<double> gp(t * t, 0.0);
  add_g_wt(gh.data(), c.v.data(), gp.data(), t, t, d);
  add_xt_g(c.p.data(), gh.data(), g.v.data(), t, t, d);

  // Softmax VJP; masked entries have p = 0 and so pass nothing back.
  std::vector<double> gs(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < t; ++j) dot += c.p[i * t + j] * gp[i * t + j];
    for (std::size_t j = 0; j < t; ++j)
      gs[i * t + j] = scale * c.p[i * t + j] * (gp[i * t + j] - dot);
  }
  // s = q k^T: gq = gs k, gk = gs^T q.
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) {
      const double w = gs[i * t + j];
      if (w == 0.0) continue;
      for (std::size_t e = 0; e < d; ++e) {
        g.q[i * d + e] += w * c.k[j * d + e];
        g.k[j * d + e] += w * c.q[i * d + e];
      }
    }

  add_xt_g(z.data(), g.q.data(), g.theta.data() + L.wq, t, d, d);
  add_xt_g(z.data(), g.k.data(), g.theta.data() + L.wk, t, d, d);
  add_xt_g(z.data(), g.v.data(), g.theta.data() + L.wv, t, d, d);

  g.z = gh;
  add_g_wt(g.q.data(), theta.data() + L.wq, g.z.data(), t, d, d);
  add_g_wt(g.k.data(), theta.data() + L.wk, g.z.data(), t, d, d);
  add_g_wt(g.v.data(), theta.data() + L.wv, g.z.data(), t, d, d);
  return g;
}

BlockMask attention_student_mask(const AttnShape& shape, std::span<const double> theta,
                                 std::span<const double> z, const AttnConfig& cfg) {
  require(theta.size() == shape.num_params() && z.size() == shape.dim(),
          "attention student mask: size mismatch");
  const std::size_t t = shape.tokens, d = shape.width;
  const AttnParamLayout L(shape);
  std::vector<double> q(t * d), k(t * d);
  mat_mul(z.data(), theta.data() + L.wq, q.data(), t, d, d);
  mat_mul(z.data(), theta.data() + L.wk, k.data(), t, d, d);
  Tensor qt({t, d}), kt({t, d});
  for (std::size_t i = 0; i < t * d; ++i) {
    qt.values()[i] = static_cast<float>(q[i]);
    kt.values()[i] = static_cast<float>(k[i]);
  }
  AttnConfig c = cfg;
  c.block = shape.block;
  c.samples = shape.block;
  c.scale = shape.effective_scale();
  return threshold_mask(dense_importance_map(qt, kt, c), c);
}

AttnStudent::AttnStudent(AttnShape shape, std::size_t stages, AttnConfig mask_cfg,
                         RngStream init)
    : shape_(shape), stages_(stages), cfg_(mask_cfg), theta_(stages * shape.num_params(), 0.0) {
  require(stages >= 1, "attention student needs stages >= 1");
  require(shape.tokens >= 1 && shape.tokens <= 64, "attention student supports 1..64 tokens");
  require(shape.width >= 1 && shape.block >= 1, "attention student: empty shape");
  const AttnParamLayout L(shape);
  const std::size_t d = shape.width;
  const double qk_std = 1.0 / std::sqrt(double(d));
  for (std::size_t s = 0; s < stages; ++s) {
    auto p = params(s);
    RngStream r = init.split(s);
    for (std::size_t i = 0; i < d * d; ++i) {
      p[L.wq + i] = qk_std * r.normal();
      p[L.wk + i] = qk_std * r.normal();
      p[L.wv + i] = 0.1 * r.normal();
    }
    for (std::size_t i = 0; i < d; ++i) p[L.wo + i * d + i] = 1.0;
  }
}

std::span<double> AttnStudent::params(std::size_t stage) {
  return {theta_.data() + stage * params_per_stage(), params_per_stage()};
}

std::span<const double> AttnStudent::params(std::size_t stage) const {
  return {theta_.data() + stage * params_per_stage(), params_per_stage()};
}

void AttnStudent::forward(std::size_t stage, std::span<const double> z,
                          std::span<double> out) const {
  const auto p = params(stage);
  const BlockMask mask = attention_student_mask(shape_, p, z, cfg_);
  const AttnCache c = masked_attention_forward(shape_, p, z, mask);
  std::copy(c.y.begin(), c.y.end(), out.begin());
}

void AttnStudent::vjp(std::size_t stage, std::span<const double> z, std::span<const double> gout,
                      std::span<double> gparams) const {
  const auto p = params(stage);
  const BlockMask mask = attention_student_mask(shape_, p, z, cfg_);
  const AttnCache c = masked_attention_forward(shape_, p, z, mask);
  const AttnGrad g = masked_attention_backward(shape_, p, z, mask, c, gout);
  for (std::size_t i = 0; i < g.theta.size(); ++i) gparams[i] += g.theta[i];
}

// ---------------------------------------------------------------- training

Trajectory run_trajectory(const Student& student, const Schedule& sched, std::size_t n,
                          RngStream rng) {
  require(student.stages() == sched.stages(), "student and schedule differ in stage count");
  const std::size_t d = student.dim(), k = sched.stages();
  Trajectory tr;
  tr.inputs.resize(k);
  tr.outputs.resize(k);
  std::vector<double> x(n * d);
  for (auto& v : x) v = rng.normal();
  for (std::size_t i = k; i-- > 0;) {
    std::vector<double> xhat(n * d);
    for (std::size_t s = 0; s < n; ++s)
      student.forward(i, std::span(x).subspan(s * d, d), std::span(xhat).subspan(s * d, d));
    if (i > 0) {
      // DDIM: keep the noise implied by (input, prediction), move to t_i.
      const double a_in = sched.alpha(sched.hi(i)), s_in = sched.sigma(sched.hi(i));
      const double a_out = sched.alpha(sched.lo(i)), s_out = sched.sigma(sched.lo(i));
      std::vector<double> next(n * d);
      for (std::size_t j = 0; j < n * d; ++j)
        next[j] = a_out * xhat[j] + s_out * (x[j] - a_in * xhat[j]) / s_in;
      tr.inputs[i] = std::move(x);
      x = std::move(next);
    } else {
      tr.inputs[i] = std::move(x);
    }
    tr.outputs[i] = std::move(xhat);
  }
  return tr;
}

std::vector<double> tdm_gradient(const Student& student, std::size_t stage,
                                 std::span<const double> inputs, std::span<const double> outputs,
                                 const FakeScoreModel& fake,
                                 const GaussianMixtureTeacher& teacher, const Schedule& sched,
                                 RngStream rng) {
  const std::size_t d = student.dim();
  require(stage < sched.stages(), "tdm_gradient: stage out of range");
  require(inputs.size() == outputs.size() && !inputs.empty() && inputs.size() % d == 0,
          "tdm_gradient: batch shape mismatch");
  require(teacher.dim() == d, "tdm_gradient: teacher and student dimensions differ");
  const std::size_t n = inputs.size() / d, buckets = fake.buckets;
  const auto times = sched.bucket_times(stage, buckets);
  std::vector<double> grad(student.params_per_stage(), 0.0);
  std::vector<double> xj(d), sf(d), sr(d), g(d);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t q = rng.uniform_index(buckets);
    const double t = times[q], a = sched.alpha(t), sg = sched.sigma(t);
    const auto xhat = outputs.subspan(s * d, d);
    for (std::size_t c = 0; c < d; ++c) xj[c] = a * xhat[c] + sg * rng.normal();
    fake.score(stage, q, xj, sched, sf);
    teacher.score(xj, t, sched, sr);
    // d x_j / d x0_hat = alpha_t.
    for (std::size_t c = 0; c < d; ++c) g[c] = sched.weight(stage) * a * (sf[c] - sr[c]);
    student.vjp(stage, inputs.subspan(s * d, d), g, grad);
  }
  for (auto& v : grad) v /= double(n);
  return grad;
}

MomentError moment_error(std::span<const double> samples, std::size_t dim,
                         const GaussianMixtureTeacher& teacher) {
  require(dim == teacher.dim() && samples.size() % dim == 0 && samples.size() >= 2 * dim,
          "moment_error: need at least two samples of the teacher dimension");
  const std::size_t n = samples.size() / dim;
  std::vector<double> mu(dim, 0.0), cov(dim * dim, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < dim; ++c) mu[c] += samples[s * dim + c];
  for (auto& v : mu) v /= double(n);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        cov[i * dim + j] += (samples[s * dim + i] - mu[i]) * (samples[s * dim + j] - mu[j]);
  for (auto& v : cov) v /= double(n - 1);

  const auto tmu = teacher.mean(), tcov = teacher.covariance();
  double dm = 0.0, dc = 0.0, nc = 0.0;
  for (std::size_t c = 0; c < dim; ++c) dm += (mu[c] - tmu[c]) * (mu[c] - tmu[c]);
  for (std::size_t i = 0; i < dim * dim; ++i) {
    dc += (cov[i] - tcov[i]) * (cov[i] - tcov[i]);
    nc += tcov[i] * tcov[i];
  }
  return {std::sqrt(dm / double(dim)), std::sqrt(dc / nc)};
}

DistillResult distill(const GaussianMixtureTeacher& teacher, Student& student,
                      const Schedule& sched, const DistillConfig& cfg) {
  require(student.stages() == sched.stages(), "student and schedule differ in stage count");
  require(teacher.dim() == student.dim(), "teacher and student dimensions differ");
  require(cfg.batch >= 2 && cfg.fake_batch >= 2 && cfg.eval_batch >= 2 && cfg.final_batch >= 2,
          "distill: batches need at least 2 samples");
  require(cfg.buckets >= 1 && cfg.trace_every >= 1, "distill: buckets and trace_every >= 1");
  require(cfg.lr > 0.0 && std::isfinite(cfg.lr), "distill: learning rate must be positive");
  const std::size_t d = student.dim(), k = sched.stages();
  const RngStream base(cfg.seed);
  const RngStream iter_rngs = base.split(1);

  auto evaluate = [&](RngStream r, std::size_t n) {
    const Trajectory tr = run_trajectory(student, sched, n, r);
    return std::pair{moment_error(tr.sample(), d, teacher), tr};
  };

  DistillResult res;
  const MomentError e0 = evaluate(base.split(2), cfg.eval_batch).first;
  const double limit = cfg.divergence_factor * std::max(e0.mean_err + e0.cov_err, 0.05);

  for (std::size_t it = 0; it < cfg.iters; ++it) {
    const RngStream r = iter_rngs.split(it);
    const Trajectory fit = run_trajectory(student, sched, cfg.fake_batch, r.split(0));
    const FakeScoreModel fake = train_fake_score(fit.outputs, d, sched, cfg.buckets, r.split(1));
    const Trajectory tr = run_trajectory(student, sched, cfg.batch, r.split(2));

    std::vector<std::vector<double>> grads(k);
    double sq = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      grads[i] = tdm_gradient(student, i, tr.inputs[i], tr.outputs[i], fake, teacher, sched,
                              r.split(3).split(i));
      for (double g : grads[i]) sq += g * g;
    }
    bool finite = std::isfinite(sq);
    for (std::size_t i = 0; i < k; ++i) {
      auto p = student.params(i);
      for (std::size_t j = 0; j < p.size(); ++j) {
        p[j] -= cfg.lr * grads[i][j];
        finite = finite && std::isfinite(p[j]);
      }
    }

    if (!finite || it % cfg.trace_every == 0 || it + 1 == cfg.iters) {
      MomentError e{INFINITY, INFINITY};
      if (finite) e = evaluate(r.split(4), cfg.eval_batch).first;
      res.trace.push_back({it, e.mean_err, e.cov_err, fake.mean_residual(), std::sqrt(sq)});
      if (!(e.mean_err + e.cov_err <= limit)) {
        res.diverged = true;
        return res;
      }
    }
  }

  const auto [err, tr] = evaluate(base.split(3), cfg.final_batch);
  (void)err;
  const auto& x = tr.sample();
  const std::size_t n = x.size() / d;
  res.sample_mean.assign(d, 0.0);
  res.sample_std.assign(d, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < d; ++c) res.sample_mean[c] += x[s * d + c];
  for (auto& v : res.sample_mean) v /= double(n);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = x[s * d + c] - res.sample_mean[c];
      res.sample_std[c] += dv * dv;
    }
  for (auto& v : res.sample_std) v = std::sqrt(v / double(n - 1));
  return res;
}

}  // namespace asablade::tdm
