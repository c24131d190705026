// Command-line pipelines: each subcommand reads an ExperimentConfig and
// writes CSV, PGM and text artifacts into the output directory.
#pragma once

#include "xrt/config.hpp"
#include "xrt/io.hpp"
#include "xrt/parametrix.hpp"
#include "xrt/reconstruct.hpp"
#include "xrt/symbol.hpp"
#include "xrt/transform.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace xrt {

struct RunContext {
  ExperimentConfig cfg;
  fs::path out;
  std::string hash;
  std::ostream* log = &std::cout;

  void csv(const std::string& file, const CsvTable& t) const { t.write(out / file, hash); }
};

// ---------------------------------------------------------------------------
// Pipelines

inline int run_calibrate(const RunContext& ctx) {
  Calibration c = calibrate_constant(ctx.cfg.cutoff().chi);
  write_calibration(ctx.out, c);
  *ctx.log << "C = " << csv_number(c.C) << " (spread " << csv_number(c.spread) << ")\n";
  return 0;
}

inline CsvTable simplicity_csv(const SimplicityReport& r) {
  CsvTable t({"convex", "non_trapping", "no_conjugate_points", "min_curvature", "max_exit_time", "conjugate_time",
              "simple"});
  t.row({double(r.convex), double(r.non_trapping), double(r.no_conjugate_points), r.min_curvature, r.max_exit_time,
         r.conjugate_time, double(r.simple())});
  return t;
}

inline int run_simplicity(const RunContext& ctx) {
  SimplicityReport r = check_simplicity(ctx.cfg.metric());
  ctx.csv("simplicity.csv", simplicity_csv(r));
  *ctx.log << (r.simple() ? "simple" : "not simple");
  if (r.conjugate_ray) *ctx.log << "; conjugate point at t = " << csv_number(r.conjugate_time);
  *ctx.log << "\n";
  return 0;
}

inline int run_forward(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  ScalarGrid f = c.input();
  SinogramGrid s = xray(c.metric(), f, c.fan(), RayOptions{0.0, c.workers});
  ctx.csv("sinogram.csv", sinogram_csv(s));
  *ctx.log << "sinogram " << c.n_theta << "x" << c.n_alpha << ", max |If| = " << csv_number(s.max_abs()) << "\n";
  return 0;
}

inline int run_normal(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  MetricField m = c.metric();
  ScalarGrid f = c.input();
  ScalarGrid nf = normal_kernel(m, f, c.cutoff(), {}, c.workers);
  ctx.csv("normal.csv", grid_csv(nf));
  write_pgm(ctx.out / "normal.pgm", nf);
  NormalIdentityOptions no;
  no.grid_n = c.dims;
  no.fan = c.fan();
  no.workers = c.workers;
  NormalIdentityReport r = verify_normal_identity(m, 5, c.seed, no);
  CsvTable t({"trials", "ratio_compose", "ratio_kernel", "ratio_compose_kernel"});
  t.row({double(r.trials), r.ratio_compose, r.ratio_kernel, r.ratio_compose_kernel});
  ctx.csv("normal_identity.csv", t);
  *ctx.log << "max ||I*I f - N f|| / ||f|| = " << csv_number(r.ratio_kernel) << "\n";
  return 0;
}

inline std::vector<Vec2> symbol_centers() {
  return {Vec2(0.0, 0.0), Vec2(0.3, 0.0), Vec2(0.0, -0.4), Vec2(-0.25, 0.25), Vec2(0.2, 0.45)};
}

inline int run_symbol(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  MetricField m = c.metric();
  CutoffSpec cut = c.cutoff();
  SymbolOptions so;
  so.workers = c.workers;
  FrequencyGrid fg = FrequencyGrid::geometric(8.0, 200.0, 12, 8);
  SymbolGrid a = symbol_fft(m, cut, symbol_centers(), fg, so);
  ctx.csv("symbol.csv", symbol_csv(a));
  SeminormReport sa = seminorm_check(a, -1.0, 2);
  ctx.csv("seminorm_a.csv", seminorm_csv(sa));
  *ctx.log << "a in S^-1 (|alpha| <= 2): " << (sa.pass() ? "PASS" : "FAIL") << "\n";
  return 0;
}

inline int run_parametrix(const RunContext& ctx, double C) {
  const auto& c = ctx.cfg;
  SmoothingOptions so;
  so.grid_n = c.dims;
  so.workers = c.workers;
  so.padding = c.padding;
  SmoothingReport r = smoothing_order(c.metric(), C, c.cutoff(), so);
  ctx.csv("smoothing.csv", smoothing_csv(r));
  write_text(ctx.out / "smoothing.txt", smoothing_summary(r));
  *ctx.log << smoothing_summary(r);
  return 0;
}

inline int run_reconstruct(const RunContext& ctx, double C) {
  const auto& c = ctx.cfg;
  MetricField m = c.metric();
  CutoffSpec cut = c.cutoff();
  InversionOptions io;
  io.max_iter = c.max_iter;
  io.tol = c.tol;
  io.padding = c.padding;
  io.workers = c.workers;
  ScalarGrid layout = ScalarGrid::square(c.dims);
  MaskedNormal N(m, cut, layout, io);
  ScalarGrid truth = c.input().times(N.mask());
  InversionResult r = invert_normal(m, C, cut, N.apply(truth), io, truth);
  ctx.csv("trace.csv", trace_csv(r.trace));
  ctx.csv("f_rec.csv", grid_csv(r.f));
  write_pgm(ctx.out / "f_rec.pgm", r.f);
  *ctx.log << to_string(r.status) << " after " << r.iterations << " iterations, residual "
           << csv_number(r.trace.residual.back());
  if (!r.trace.error.empty()) *ctx.log << ", error " << csv_number(r.trace.error.back());
  *ctx.log << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Property suite

struct CheckRow {
  std::string name;
  double value;
  double threshold;
  bool less;  // pass iff value < threshold, otherwise value > threshold
  bool pass() const { return less ? value < threshold : value > threshold; }
};

/// Desk-scale property checks on the configured metric; Euclidean-only
/// oracles are skipped on curved metrics.
inline std::vector<CheckRow> verify_suite(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  MetricField m = c.metric();
  CutoffSpec cut = c.cutoff();
  bool flat = c.family == "euclidean";
  unsigned w = c.workers;
  std::vector<CheckRow> rows;
  auto add = [&](std::string n, double v, double t, bool less) {
    rows.push_back({std::move(n), v, t, less});
    *ctx.log << "  " << rows.back().name << " = " << csv_number(v) << (less ? " < " : " > ") << csv_number(t)
             << (rows.back().pass() ? "  ok" : "  FAILED") << "\n";
  };

  SimplicityReport sr = check_simplicity(m);
  ctx.csv("simplicity.csv", simplicity_csv(sr));
  add("simple", sr.simple() ? 1.0 : 0.0, 0.5, false);

  Calibration cal = calibrate_constant(cut.chi);
  write_calibration(ctx.out, cal);
  add("calibration_spread", cal.spread, 1e-6, true);

  ScalarGrid zero = ScalarGrid::square(32);
  add("forward_zero", xray(m, zero, FanBeam{16, 8}, RayOptions{0.0, w}).max_abs(), 1e-300, true);

  if (flat) {
    GaussianField gf{0.15, Vec2::Zero()};
    FanBeam fan{36, 30};
    SinogramGrid s = xray_field(m, gf, fan, RayOptions{2e-3, w});
    ctx.csv("sinogram_gaussian.csv", sinogram_csv(s));
    double err = 0.0;
    for (int i = 0; i < fan.n_theta; ++i)
      for (int j = 0; j < fan.n_alpha; ++j)
        err = std::max(err, std::abs(s(i, j) - gf.line_integral(std::abs(std::sin(fan.alpha(j))))));
    add("forward_gaussian_rel_err", err / gf.line_integral(0.0), 1e-3, true);

    NormalKernel nk(m, CutoffSpec::identity_on(1.0), ScalarGrid::square(32), 0.5, KernelQuadrature{4096, 64},
                    GeometryTableOptions{.workers = w});
    double n0 = nk.at(Vec2::Zero(), DiskIndicator{0.5, Vec2::Zero()});
    add("normal_disk_rel_err", std::abs(n0 - two_pi) / two_pi, 1e-3, true);
  }

  NormalIdentityOptions no;
  no.grid_n = 48;
  no.fan = {360, 180};
  no.workers = w;
  NormalIdentityReport nr = verify_normal_identity(m, 2, c.seed, no);
  CsvTable nt({"trials", "ratio_compose", "ratio_kernel", "ratio_compose_kernel"});
  nt.row({double(nr.trials), nr.ratio_compose, nr.ratio_kernel, nr.ratio_compose_kernel});
  ctx.csv("normal_identity.csv", nt);
  add("normal_identity", nr.ratio_kernel, 2e-2, true);

  double plateau = 0.0;
  for (double s = 16.0 * pi; s <= 64.0 * pi; s *= 1.2) {
    Vec2 xi = s * Vec2(std::cos(0.7), std::sin(0.7));
    double v = principal_symbol(m, cut, Vec2::Zero(), xi, cal.C) * cotangent_norm(m.eval(Vec2::Zero()), xi);
    plateau = std::max(plateau, std::abs(v / cal.C - 1.0));
  }
  add("principal_plateau", plateau, 5e-2, true);

  {
    ScalarGrid layout = ScalarGrid::square(64);
    double step = identity_op(layout, kSobolevPadding).lattice_step();
    WindowedPacket wp = wave_packet_level(4, step, cut);
    ScalarGrid f = ScalarGrid::sample(64, [&](const Vec2& x) { return wp.window(x) * wp.packet(x); });
    ResidualOptions ro;
    ro.workers = w;
    ResidualResult rr = residual(m, cal.C, cut, f, ro);
    add("parametrix_residual_j4", rr.ratio, 0.2, true);
  }

  {
    InversionOptions io;
    io.max_iter = 30;
    io.tol = 1e-6;
    io.workers = w;
    ScalarGrid layout = ScalarGrid::square(32);
    MaskedNormal N(m, cut, layout, io);
    ScalarGrid truth = ScalarGrid::sample(32, GaussianField{0.15, Vec2::Zero()}).times(N.mask());
    InversionResult r = invert_normal(m, cal.C, cut, N.apply(truth), io, truth);
    ctx.csv("trace.csv", trace_csv(r.trace));
    add("reconstruction_error", r.trace.error.back(), 3e-2, true);
  }

  if (sr.simple()) {
    InjectivityOptions io;
    io.workers = w;
    InjectivityReport ir = injectivity_probe(m, 12, io);
    ctx.csv("injectivity.csv", injectivity_csv(ir));
    add("injectivity_sigma_ratio", ir.sigma_min / ir.sigma_max, 1e-6, false);
    add("injectivity_symmetry", ir.symmetry_defect, 1e-2, true);
  }

  CsvTable t({"check", "value", "threshold", "pass"});
  for (const auto& r : rows)
    t.row_text({r.name, csv_number(r.value), csv_number(r.threshold), r.pass() ? "1" : "0"});
  ctx.csv("verify.csv", t);
  return rows;
}

inline int run_verify(const RunContext& ctx) {
  auto rows = verify_suite(ctx);
  bool ok = std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass(); });
  *ctx.log << "verify: " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Entry point

inline ExperimentConfig default_config() {
  return config_parse("[experiment]\nname = default\n[metric]\nfamily = euclidean\n");
}

/// Exit codes: 0 success, 1 runtime or verification failure, 2 usage error.
inline int cli_run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Geodesic X-ray transform toolkit", "xrt"};
  std::string config_path, out_dir;
  std::optional<unsigned> workers;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "experiment config file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides experiment.output_dir)");
  app.add_option("--workers", workers, "worker threads, 0 = hardware concurrency");
  app.add_option("--seed", seed, "seed for random probes (overrides experiment.seed)");
  app.require_subcommand(1, 1);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simplicity", "check convexity, non-trapping and conjugate points"},
      {"forward", "geodesic X-ray transform of the input field"},
      {"normal", "normal operator by kernel quadrature and the I*I identity"},
      {"symbol", "full symbol on the lattice and its seminorms"},
      {"parametrix", "smoothing order of PN - Id on wave packets"},
      {"reconstruct", "parametrix-preconditioned inversion of N"},
      {"verify", "property suite; nonzero exit on failure"},
      {"calibrate", "compute and store the dimensional constant C"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }
  std::string cmd = app.get_subcommands().front()->get_name();
  try {
    RunContext ctx;
    ctx.cfg = config_path.empty() ? default_config() : config_parse(read_text(config_path));
    if (workers) ctx.cfg.workers = *workers;
    if (seed) ctx.cfg.seed = *seed;
    if (!out_dir.empty()) ctx.cfg.output_dir = out_dir;
    ctx.cfg.validate();
    ctx.out = ctx.cfg.output_dir;
    ctx.hash = config_hash(ctx.cfg);
    ctx.log = &out;
    fs::create_directories(ctx.out);
    write_text(ctx.out / "config.txt", config_serialize(ctx.cfg));
    if (cmd == "calibrate") return run_calibrate(ctx);
    if (cmd == "simplicity") return run_simplicity(ctx);
    if (cmd == "forward") return run_forward(ctx);
    if (cmd == "normal") return run_normal(ctx);
    if (cmd == "symbol") return run_symbol(ctx);
    if (cmd == "verify") return run_verify(ctx);
    double C = read_calibration(ctx.out);
    if (cmd == "parametrix") return run_parametrix(ctx, C);
    return run_reconstruct(ctx, C);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace xrt
