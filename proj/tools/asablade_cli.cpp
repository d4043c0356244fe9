// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Talks to the library only through the C interface.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asablade/asablade.h"
#include "json.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

struct CliError {
  int code;
  std::string message;
};

void check(asab_status s) {
  if (s == ASAB_OK) return;
  throw CliError{s == ASAB_ERR_NUMERICAL ? kExitNumerical : kExitValidation, asab_last_error()};
}

[[noreturn]] void fail(const std::string& msg) { throw CliError{kExitValidation, msg}; }

template <class T, void (*Destroy)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Destroy(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};
using Tensor = Handle<asab_tensor, asab_tensor_destroy>;
using Mask = Handle<asab_mask, asab_mask_destroy>;
using Perm = Handle<asab_perm, asab_perm_destroy>;
using DistillResult = Handle<asab_distill_result, asab_distill_result_destroy>;

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out_dir;

  std::string out_path(const std::string& p) const {
    if (out_dir.empty() || fs::path(p).is_absolute()) return p;
    fs::create_directories(out_dir);
    return (fs::path(out_dir) / p).string();
  }
};

void load_tensor(const std::string& path, Tensor& t) { check(asab_tensor_load(path.c_str(), t.out())); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) fail("cannot write '" + path + "'");
  os << text;
  if (!os) fail("write to '" + path + "' failed");
}

json number(double x) { return std::isfinite(x) ? json(x) : json(x > 0 ? "inf" : "-inf"); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

// ---------------------------------------------------------------- option groups

struct AttnOpts {
  asab_attn_config cfg{};
  std::string sampling = "uniform";
  std::string curve = "gilbert3d";

  AttnOpts() { asab_attn_config_default(&cfg); }

  void add(CLI::App* app, bool thresholds, bool probing) {
    app->add_option("--block", cfg.block, "tokens per block")->check(CLI::PositiveNumber);
    if (probing) {
      app->add_option("--samples", cfg.samples, "sampled tokens per block")
          ->check(CLI::PositiveNumber);
      app->add_option("--sampling", sampling, "uniform | strided");
      app->add_option("--scale", cfg.scale, "logit scale, 0 = 1/sqrt(d)");
    }
    if (thresholds) {
      app->add_option("--tau", cfg.tau, "cumulative importance threshold");
      app->add_option("--min-keep", cfg.min_keep, "minimum kept fraction per row");
      app->add_option("--max-keep", cfg.max_keep, "maximum kept fraction per row");
    }
  }
  void add_pool(CLI::App* app) {
    app->add_option("--pool-n", cfg.pool_n, "global-token window, 0 disables");
  }
  void add_curve(CLI::App* app) {
    app->add_option("--curve", curve, "gilbert3d | perframe2d | raster");
  }

  asab_attn_config resolve() const {
    asab_attn_config c = cfg;
    if (sampling == "uniform") c.sampling = ASAB_SAMPLING_UNIFORM;
    else if (sampling == "strided") c.sampling = ASAB_SAMPLING_STRIDED;
    else fail("unknown sampling '" + sampling + "'");
    c.curve = curve_id(curve);
    return c;
  }
  static int curve_id(const std::string& s) {
    if (s == "gilbert3d") return ASAB_CURVE_GILBERT3D;
    if (s == "perframe2d") return ASAB_CURVE_PERFRAME2D;
    if (s == "raster") return ASAB_CURVE_RASTER;
    fail("unknown curve '" + s + "'");
  }
};

struct WorkloadOpts {
  asab_workload_spec spec{};
  std::string structure = "smooth_field";
  std::string corr = "3";

  WorkloadOpts() {
    asab_workload_spec_default(&spec);
    std::ostringstream os;
    os << spec.corr_length;
    corr = os.str();
  }

  void add(CLI::App* app) {
    app->add_option("--t", spec.t, "frames")->check(CLI::PositiveNumber);
    app->add_option("--h", spec.h, "grid height")->check(CLI::PositiveNumber);
    app->add_option("--w", spec.w, "grid width")->check(CLI::PositiveNumber);
    app->add_option("--d", spec.d, "head dim")->check(CLI::PositiveNumber);
    app->add_option("--structure", structure,
                    "smooth_field | block_motif | uniform | adversarial_spike");
    app->add_option("--corr-length", corr, "correlation length in tokens, or inf");
    app->add_option("--sharpness", spec.sharpness, "approximate self logit");
  }

  asab_workload_spec resolve(std::uint64_t seed) const {
    asab_workload_spec s = spec;
    s.seed = seed;
    static const std::map<std::string, int> kStruct = {
        {"smooth_field", ASAB_STRUCT_SMOOTH_FIELD},
        {"block_motif", ASAB_STRUCT_BLOCK_MOTIF},
        {"uniform", ASAB_STRUCT_UNIFORM},
        {"adversarial_spike", ASAB_STRUCT_ADVERSARIAL_SPIKE}};
    const auto it = kStruct.find(structure);
    if (it == kStruct.end()) fail("unknown structure '" + structure + "'");
    s.structure = it->second;
    if (corr == "inf" || corr == "infinity") {
      s.corr_length = INFINITY;
    } else {
      try {
        s.corr_length = std::stod(corr);
      } catch (const std::exception&) {
        fail("bad --corr-length '" + corr + "'");
      }
    }
    return s;
  }
};

std::vector<int> parse_variants(const std::string& s) {
  static const std::map<std::string, int> kVariants = {{"asa", ASAB_VARIANT_ASA},
                                                       {"asa_gt", ASAB_VARIANT_ASA_GT},
                                                       {"static_window", ASAB_VARIANT_STATIC_WINDOW},
                                                       {"dense", ASAB_VARIANT_DENSE}};
  std::vector<int> out;
  for (const auto& v : split(s, ',')) {
    const auto it = kVariants.find(v);
    if (it == kVariants.end()) fail("unknown variant '" + v + "'");
    out.push_back(it->second);
  }
  if (out.empty()) fail("empty variant list");
  return out;
}

const char* variant_name(int v) {
  switch (v) {
    case ASAB_VARIANT_ASA: return "asa";
    case ASAB_VARIANT_ASA_GT: return "asa_gt";
    case ASAB_VARIANT_STATIC_WINDOW: return "static_window";
    default: return "dense";
  }
}

json report_json(const asab_run_report& r) {
  return {{"variant", variant_name(r.variant)}, {"tau", r.tau},
          {"sparsity", r.sparsity},             {"rel_error", r.rel_error},
          {"psnr", number(r.psnr)},             {"ssim", r.ssim},
          {"flops_dense", r.flops_dense},       {"flops_sparse", r.flops_sparse},
          {"flops_probe", r.flops_probe},       {"flops_ratio", r.flops_ratio},
          {"mask_overlap_vs_oracle", r.mask_overlap}};
}

json config_json(const asab_attn_config& c, const asab_workload_spec& s) {
  return {{"block", c.block},     {"samples", c.samples},     {"tau", c.tau},
          {"min_keep", c.min_keep}, {"max_keep", c.max_keep}, {"pool_n", c.pool_n},
          {"t", s.t},             {"h", s.h},                 {"w", s.w},
          {"d", s.d},             {"corr_length", number(s.corr_length)},
          {"sharpness", s.sharpness}};
}

// Applies --config keys to options of `sub` (or the root app) that were not
// given on the command line. Keys use underscores where flags use dashes.
void apply_config(CLI::App& app, CLI::App* sub, const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("cannot read config '" + path + "'");
  json cfg;
  try {
    cfg = json::parse(is);
  } catch (const json::exception& e) {
    fail("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (!cfg.is_object()) fail("config '" + path + "' must be a flat JSON object");
  static const std::vector<std::string> kKnown = {
      "block", "samples", "tau", "min_keep", "max_keep", "pool_n", "scale", "sampling",
      "curve", "t", "h", "w", "d", "structure", "corr_length", "sharpness", "seed"};
  for (const auto& [key, value] : cfg.items()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end())
      fail("unknown config key '" + key + "'");
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt) opt = app.get_option_no_throw(flag);
    if (!opt || opt->count() > 0) continue;
    std::string text;
    if (value.is_string()) text = value.get<std::string>();
    else if (value.is_number_integer()) text = std::to_string(value.get<long long>());
    else if (value.is_number()) {
      std::ostringstream os;
      os.precision(17);
      os << value.get<double>();
      text = os.str();
    } else fail("config key '" + key + "' must be a number or string");
    try {
      opt->add_result(text);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      fail("config key '" + key + "': " + e.what());
    }
  }
}

// ---------------------------------------------------------------- subcommands

int run_gilbert(const Globals& g, std::size_t t, std::size_t h, std::size_t w,
                const std::string& curve, const std::string& out) {
  Perm p;
  check(asab_gilbert_order(t, h, w, AttnOpts::curve_id(curve), p.out()));
  std::ostringstream os;
  const size_t* fwd = asab_perm_forward(p.get());
  for (std::size_t i = 0; i < asab_perm_size(p.get()); ++i) os << fwd[i] << '\n';
  write_text(g.out_path(out), os.str());
  std::cout << "wrote " << asab_perm_size(p.get()) << " indices to " << g.out_path(out) << '\n';
  return kExitOk;
}

int run_probe(const Globals& g, const AttnOpts& a, const std::string& qp, const std::string& kp,
              bool oracle, const std::string& out) {
  Tensor q, k, pimp;
  load_tensor(qp, q);
  load_tensor(kp, k);
  const asab_attn_config cfg = a.resolve();
  std::uint64_t flops = 0;
  check(asab_probe(q.get(), k.get(), &cfg, g.seed, oracle ? 1 : 0, pimp.out(), &flops));
  check(asab_tensor_save(pimp.get(), g.out_path(out).c_str()));
  std::cout << (oracle ? "dense oracle" : "probe") << " importance "
            << asab_tensor_dim(pimp.get(), 0) << "x" << asab_tensor_dim(pimp.get(), 1)
            << ", flops " << flops << '\n';
  return kExitOk;
}

int run_mask(const Globals& g, const AttnOpts& a, const std::string& pimp_path,
             const std::string& out, const std::string& csv) {
  Tensor pimp, mt;
  Mask m;
  load_tensor(pimp_path, pimp);
  const asab_attn_config cfg = a.resolve();
  check(asab_mask_threshold(pimp.get(), &cfg, m.out()));
  check(asab_mask_to_tensor(m.get(), mt.out()));
  check(asab_tensor_save(mt.get(), g.out_path(out).c_str()));
  if (!csv.empty()) check(asab_mask_write_csv(m.get(), g.out_path(csv).c_str()));
  std::cout << "mask " << asab_mask_rows(m.get()) << "x" << asab_mask_cols(m.get())
            << ", sparsity " << asab_mask_sparsity(m.get()) << ", degenerate rows "
            << asab_mask_degenerate_rows(m.get()) << '\n';
  return kExitOk;
}

int run_attend(const Globals& g, const AttnOpts& a, const std::string& qp, const std::string& kp,
               const std::string& vp, const std::string& mp, const std::string& ref,
               const std::vector<std::size_t>& grid, const std::string& out,
               const std::string& stats) {
  Tensor q, k, v, mt, o;
  Mask m;
  load_tensor(qp, q);
  load_tensor(kp, k);
  load_tensor(vp, v);
  load_tensor(mp, mt);
  check(asab_mask_from_tensor(mt.get(), m.out()));
  const asab_attn_config cfg = a.resolve();
  asab_attend_stats st{};
  check(asab_attend(q.get(), k.get(), v.get(), m.get(), &cfg, o.out(), &st));
  check(asab_tensor_save(o.get(), g.out_path(out).c_str()));
  json j = {{"effective_sparsity", st.effective_sparsity}, {"flops", st.flops},
            {"pool_n", cfg.pool_n}};
  if (!ref.empty()) {
    Tensor r;
    load_tensor(ref, r);
    if (!grid.empty() && grid.size() != 3) fail("--grid takes t,h,w");
    asab_metrics mt_out{};
    check(asab_compare(o.get(), r.get(), grid.empty() ? 0 : grid[0], grid.empty() ? 0 : grid[1],
                       grid.empty() ? 0 : grid[2], &mt_out));
    j["rel_error"] = mt_out.rel_error;
    j["psnr"] = number(mt_out.psnr);
    j["ssim"] = mt_out.ssim;
    j["max_abs_diff"] = mt_out.max_abs_diff;
    j["metric_note"] = "PSNR/SSIM on the attention output tensor, not decoded video";
  }
  if (!stats.empty()) write_text(g.out_path(stats), j.dump(2) + "\n");
  std::cout << j.dump() << '\n';
  return kExitOk;
}

int run_verify_theory(const Globals& g, std::size_t n, std::size_t k, std::size_t trials,
                      unsigned threads, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  asab_rank_law law{};
  check(asab_rank_law_report(n, k, trials, g.seed, threads, &law));
  const double law_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  asab_confidence conf{};
  check(asab_confidence_table(n, k, trials, g.seed, threads, &conf));
  auto arr = [](const double* x) { return json::array({x[0], x[1], x[2]}); };
  json j = {
      {"n", n},
      {"k", k},
      {"trials", trials},
      {"seed", g.seed},
      {"rank_law",
       {{"empirical_mean", law.empirical_mean},
        {"empirical_var", law.empirical_var},
        {"analytic_mean", law.analytic_mean},
        {"analytic_var", law.analytic_var},
        {"mean_rel_error", std::abs(law.empirical_mean - law.analytic_mean) / law.analytic_mean},
        {"var_rel_error", law.analytic_var > 0
                              ? json(std::abs(law.empirical_var - law.analytic_var) /
                                     law.analytic_var)
                              : json(law.empirical_var == 0 ? 0.0 : 1.0)},
        {"runtime_s", law_s}}},
      {"confidence",
       {{"level", arr(conf.level)},
        {"normal_bound", arr(conf.normal_bound)},
        {"empirical_bound", arr(conf.empirical_bound)},
        {"exact_bound", arr(conf.exact_bound)},
        {"normal_percentile", arr(conf.normal_percentile)},
        {"empirical_percentile", arr(conf.empirical_percentile)},
        {"expected_rank_percentile", conf.expected_rank_percentile}}}};
  if (out.empty()) std::cout << j.dump(2) << '\n';
  else {
    write_text(g.out_path(out), j.dump(2) + "\n");
    std::cout << "mean rank " << law.empirical_mean << " (analytic " << law.analytic_mean
              << "), var " << law.empirical_var << " (analytic " << law.analytic_var << ")\n";
  }
  return kExitOk;
}

int run_distill(const Globals& g, asab_distill_config cfg, const std::string& teacher,
                const std::string& student, const std::string& schedule,
                const std::string& trace) {
  cfg.teacher = teacher.c_str();
  cfg.seed = g.seed;
  if (student == "affine") cfg.student = 0;
  else if (student == "attn") cfg.student = 1;
  else fail("unknown student '" + student + "' (expected affine or attn)");
  if (schedule == "rectified_flow") cfg.schedule = 0;
  else if (schedule == "vp_cosine") cfg.schedule = 1;
  else fail("unknown schedule '" + schedule + "'");

  DistillResult res;
  const asab_status s = asab_distill(&cfg, res.out());
  const std::string err = s == ASAB_OK ? "" : asab_last_error();
  if (res.get()) {
    std::ostringstream os;
    os.precision(10);
    os << "iter,mean_err,cov_err,fake_residual,grad_norm\n";
    for (std::size_t i = 0; i < asab_distill_trace_length(res.get()); ++i) {
      const auto r = asab_distill_trace_row(res.get(), i);
      os << r.iter << ',' << r.mean_err << ',' << r.cov_err << ',' << r.fake_residual << ','
         << r.grad_norm << '\n';
    }
    write_text(g.out_path(trace), os.str());
  }
  if (s != ASAB_OK) throw CliError{s == ASAB_ERR_NUMERICAL ? kExitNumerical : kExitValidation, err};
  const double* mean = asab_distill_mean(res.get());
  const double* sd = asab_distill_std(res.get());
  json j = {{"teacher", teacher}, {"student", student}, {"stages", cfg.stages},
            {"iters", cfg.iters}, {"seed", g.seed}};
  const std::size_t d = asab_distill_dim(res.get());
  j["sample_mean"] = std::vector<double>(mean, mean + d);
  j["sample_std"] = std::vector<double>(sd, sd + d);
  std::cout << j.dump() << '\n';
  return kExitOk;
}

int run_bench(const Globals& g, const AttnOpts& a, const WorkloadOpts& w,
              const std::string& variants, double target, std::size_t seeds,
              const std::string& out) {
  const auto vs = parse_variants(variants);
  const asab_attn_config cfg = a.resolve();
  json runs = json::array();
  std::map<int, std::vector<asab_run_report>> by_variant;
  for (std::size_t s = 0; s < seeds; ++s) {
    const asab_workload_spec spec = w.resolve(g.seed + s);
    std::vector<asab_run_report> reports(vs.size());
    check(asab_run_pipeline(&spec, &cfg, vs.data(), vs.size(), target, reports.data()));
    json rows = json::array();
    for (const auto& r : reports) {
      rows.push_back(report_json(r));
      by_variant[r.variant].push_back(r);
    }
    runs.push_back({{"seed", spec.seed}, {"reports", rows}});
  }
  json summary = json::object();
  std::cout << "variant         sparsity  rel_error   psnr      ssim      flops_ratio\n";
  for (int v : vs) {
    const auto& rs = by_variant[v];
    double sp = 0, re = 0, ps = 0, ss = 0, fr = 0;
    for (const auto& r : rs) {
      sp += r.sparsity;
      re += r.rel_error;
      ps += r.psnr;
      ss += r.ssim;
      fr += r.flops_ratio;
    }
    const double n = double(rs.size());
    summary[variant_name(v)] = {{"sparsity", sp / n}, {"rel_error", re / n},
                                {"psnr", number(ps / n)}, {"ssim", ss / n},
                                {"flops_ratio", fr / n}};
    std::printf("%-15s %-9.4f %-11.5g %-9.4g %-9.4f %-9.4f\n", variant_name(v), sp / n, re / n,
                ps / n, ss / n, fr / n);
  }
  json j = {{"config", config_json(cfg, w.resolve(g.seed))},
            {"seeds", seeds},
            {"target_sparsity", target},
            {"metric_note", "PSNR/SSIM on attention outputs reshaped to the token grid"},
            {"runs", runs},
            {"summary", summary}};
  if (!out.empty()) write_text(g.out_path(out), j.dump(2) + "\n");
  return kExitOk;
}

int run_sweep(const Globals& g, const AttnOpts& a, const WorkloadOpts& w, const std::string& taus,
              const std::string& variants, unsigned threads, const std::string& out) {
  std::vector<double> ts;
  for (const auto& t : split(taus, ',')) {
    try {
      ts.push_back(std::stod(t));
    } catch (const std::exception&) {
      fail("bad tau '" + t + "'");
    }
  }
  if (ts.empty()) fail("empty tau list");
  const auto vs = parse_variants(variants);
  const asab_attn_config cfg = a.resolve();
  const asab_workload_spec spec = w.resolve(g.seed);
  check(asab_sweep(&spec, &cfg, ts.data(), ts.size(), vs.data(), vs.size(),
                   g.out_path(out).c_str(), threads));
  std::cout << "wrote " << ts.size() * vs.size() << " rows to " << g.out_path(out) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asablade: adaptive block-sparse attention toolkit"};
  app.require_subcommand(1);
  // No -h: it reads as the grid height flag --h.
  app.set_help_flag("--help", "print this help and exit");
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--config", g.config, "flat JSON of attention and workload fields");
  app.add_option("--out-dir", g.out_dir, "directory for relative output paths");

  // gilbert
  auto* gil = app.add_subcommand("gilbert", "emit the token reordering permutation");
  std::size_t gt = 1, gh = 1, gw = 1;
  std::string gcurve = "gilbert3d", gout = "perm.csv";
  gil->add_option("--t", gt)->check(CLI::PositiveNumber);
  gil->add_option("--h", gh)->check(CLI::PositiveNumber);
  gil->add_option("--w", gw)->check(CLI::PositiveNumber);
  gil->add_option("--curve", gcurve, "gilbert3d | perframe2d | raster");
  gil->add_option("--out", gout, "CSV, one raster index per line");

  // probe
  auto* probe = app.add_subcommand("probe", "block importance map from sampled tokens");
  AttnOpts probe_a;
  probe_a.add(probe, false, true);
  std::string pq, pk, pout = "pimp.btf";
  bool poracle = false;
  probe->add_option("--q", pq)->required();
  probe->add_option("--k", pk)->required();
  probe->add_option("--out", pout);
  probe->add_flag("--oracle", poracle, "dense importance instead of sampling");

  // mask
  auto* mask = app.add_subcommand("mask", "threshold mask from an importance map");
  AttnOpts mask_a;
  mask_a.add(mask, true, false);
  std::string mpimp, mout = "mask.btf", mcsv;
  mask->add_option("--pimp", mpimp)->required();
  mask->add_option("--out", mout);
  mask->add_option("--csv", mcsv, "also write a 0/1 CSV heatmap");

  // attend
  auto* attend = app.add_subcommand("attend", "block-sparse attention under a mask");
  AttnOpts attend_a;
  attend_a.add(attend, false, false);
  attend->add_option("--scale", attend_a.cfg.scale, "logit scale, 0 = 1/sqrt(d)");
  attend_a.add_pool(attend);
  std::string aq, ak, av, amask, aref, aout = "out.btf", astats;
  std::vector<std::size_t> agrid;
  attend->add_option("--q", aq)->required();
  attend->add_option("--k", ak)->required();
  attend->add_option("--v", av)->required();
  attend->add_option("--mask", amask)->required();
  attend->add_option("--ref", aref, "dense output for PSNR/SSIM/relative error");
  attend->add_option("--grid", agrid, "t,h,w for per-frame SSIM")->delimiter(',');
  attend->add_option("--out", aout);
  attend->add_option("--stats", astats, "JSON stats path");

  // verify-theory
  auto* vt = app.add_subcommand("verify-theory", "order statistics of sampled block maxima");
  std::size_t vn = 16384, vk = 256, vtrials = 100000;
  unsigned vthreads = 0;
  std::string vout;
  vt->add_option("--n", vn);
  vt->add_option("--k", vk);
  vt->add_option("--trials", vtrials);
  vt->add_option("--threads", vthreads, "0 = hardware concurrency");
  vt->add_option("--out", vout, "JSON report path (stdout when omitted)");

  // distill-toy
  auto* dt = app.add_subcommand("distill-toy", "toy trajectory distribution matching");
  asab_distill_config dcfg{};
  asab_distill_config_default(&dcfg);
  std::string dteacher = "gauss:3,0.5", dstudent = "affine", dsched = "rectified_flow",
              dtrace = "trace.csv";
  dt->add_option("--teacher", dteacher, "gauss:m,s or mix:w,m,s;w,m,s");
  dt->add_option("--student", dstudent, "affine | attn");
  dt->add_option("--schedule", dsched, "rectified_flow | vp_cosine");
  dt->add_option("--stages", dcfg.stages)->check(CLI::PositiveNumber);
  dt->add_option("--iters", dcfg.iters);
  dt->add_option("--batch", dcfg.batch);
  dt->add_option("--fake-batch", dcfg.fake_batch);
  dt->add_option("--eval-batch", dcfg.eval_batch);
  dt->add_option("--buckets", dcfg.buckets);
  dt->add_option("--trace-every", dcfg.trace_every);
  dt->add_option("--lr", dcfg.lr, "0 = student default");
  dt->add_option("--dim", dcfg.dim, "affine student dimension");
  dt->add_option("--tokens", dcfg.tokens, "attention student tokens");
  dt->add_option("--width", dcfg.width, "attention student token width");
  dt->add_option("--block", dcfg.block, "attention student tokens per mask block");
  dt->add_option("--tau", dcfg.tau, "attention student mask threshold");
  dt->add_option("--trace", dtrace, "CSV: iter,mean_err,cov_err,fake_residual,grad_norm");

  // bench
  auto* bench = app.add_subcommand("bench", "end-to-end pipeline on synthetic workloads");
  AttnOpts bench_a;
  WorkloadOpts bench_w;
  bench_a.add(bench, true, true);
  bench_a.add_pool(bench);
  bench_a.add_curve(bench);
  bench_w.add(bench);
  std::string bvariants = "asa,asa_gt,static_window,dense", bout;
  double btarget = -1.0;
  std::size_t bseeds = 1;
  bench->add_option("--variants", bvariants);
  bench->add_option("--target-sparsity", btarget, "pick tau per run to hit this sparsity");
  bench->add_option("--seeds", bseeds, "consecutive seeds starting at --seed")
      ->check(CLI::PositiveNumber);
  bench->add_option("--out", bout, "JSON report path");

  // sweep
  auto* sw = app.add_subcommand("sweep", "tau sweep to CSV");
  AttnOpts sweep_a;
  WorkloadOpts sweep_w;
  sweep_a.add(sw, true, true);
  sweep_a.add_pool(sw);
  sweep_a.add_curve(sw);
  sweep_w.add(sw);
  std::string staus = "1.0,0.95,0.9,0.8,0.7,0.5", svariants = "asa,static_window,dense",
              sout = "sweep.csv";
  unsigned sthreads = 0;
  sw->add_option("--taus", staus, "comma-separated");
  sw->add_option("--variants", svariants);
  sw->add_option("--threads", sthreads);
  sw->add_option("--out", sout);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!g.config.empty()) apply_config(app, sub, g.config);
    if (sub == gil) return run_gilbert(g, gt, gh, gw, gcurve, gout);
    if (sub == probe) return run_probe(g, probe_a, pq, pk, poracle, pout);
    if (sub == mask) return run_mask(g, mask_a, mpimp, mout, mcsv);
    if (sub == attend)
      return run_attend(g, attend_a, aq, ak, av, amask, aref, agrid, aout, astats);
    if (sub == vt) return run_verify_theory(g, vn, vk, vtrials, vthreads, vout);
    if (sub == dt) return run_distill(g, dcfg, dteacher, dstudent, dsched, dtrace);
    if (sub == bench) return run_bench(g, bench_a, bench_w, bvariants, btarget, bseeds, bout);
    if (sub == sw) return run_sweep(g, sweep_a, sweep_w, staus, svariants, sthreads, sout);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}
