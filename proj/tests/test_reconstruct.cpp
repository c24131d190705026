#include "xrt/reconstruct.hpp"

#include <gtest/gtest.h>

using namespace xrt;

namespace {

const double kC = 4.0 * pi;

/// Gaussian bump restricted to the mask of the solver.
ScalarGrid masked_bump(int n, const MaskedNormal& N) {
  return ScalarGrid::sample(n, GaussianField{0.15, Vec2::Zero()}).times(N.mask());
}

/// Gaussian bump with compact support in |x| <= 0.5.
ScalarGrid compact_bump(int n) {
  RadialCutoff w{Vec2::Zero(), 0.3, 0.5};
  GaussianField g{0.15, Vec2::Zero()};
  return ScalarGrid::sample(n, [&](const Vec2& x) { return w(x) * g(x); });
}

struct RoundTrip {
  ScalarGrid truth;
  InversionResult res;
};

RoundTrip round_trip(const MetricField& m, int n, int max_iter, double tol) {
  CutoffSpec cut;
  InversionOptions o;
  o.max_iter = max_iter;
  o.tol = tol;
  MaskedNormal N(m, cut, ScalarGrid::square(n), o);
  ScalarGrid f = masked_bump(n, N);
  return {f, invert_normal(m, kC, cut, N.apply(f), o, f)};
}

}  // namespace

TEST(InvertNormal, ZeroDataGivesZeroInOneStep) {
  ScalarGrid d = ScalarGrid::square(32);
  auto r = invert_normal(euclidean_metric(), kC, CutoffSpec{}, d);
  EXPECT_EQ(r.f.max_abs(), 0.0);
  EXPECT_EQ(r.status, InversionStatus::converged);
  EXPECT_EQ(r.trace.size(), 1u);
}

TEST(InvertNormal, EuclideanRoundTrip) {
  auto rt = round_trip(euclidean_metric(), 64, 20, 1e-6);
  EXPECT_LT(rt.res.trace.error.back(), 1e-2);
  EXPECT_LE(rt.res.iterations, 20);
}

TEST(InvertNormal, CurvedRoundTrip) {
  auto rt = round_trip(gaussian_metric(0.2), 64, 30, 1e-6);
  EXPECT_LT(rt.res.trace.error.back(), 3e-2);
}

TEST(InvertNormal, ResidualNonIncreasingAndTraceConsistent) {
  auto rt = round_trip(gaussian_metric(0.2), 32, 15, 1e-8);
  const auto& tr = rt.res.trace;
  EXPECT_EQ(tr.residual.size(), tr.error.size());
  EXPECT_EQ(tr.residual.size(), tr.sobolev.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    EXPECT_GE(tr.residual[k], 0.0);
    EXPECT_GE(tr.error[k], 0.0);
    for (double s : tr.sobolev[k]) EXPECT_GE(s, 0.0);
    if (k > 0) {
      EXPECT_LE(tr.residual[k], tr.residual[k - 1] + 1e-12);
    }
  }
}

TEST(InvertNormal, FixedPointIsStable) {
  CutoffSpec cut;
  MetricField m = gaussian_metric(0.2);
  InversionOptions o;
  o.tol = 1e-4;
  ScalarGrid layout = ScalarGrid::square(32);
  MaskedNormal N(m, cut, layout, o);
  ScalarGrid f = masked_bump(32, N);
  ScalarGrid d = N.apply(f);
  auto r = invert_normal(m, kC, cut, d, o);
  ASSERT_EQ(r.status, InversionStatus::converged);
  PseudoOp P = parametrix(m, kC, cut, layout);
  ScalarGrid step = apply_op(P, d - N.apply(r.f)).times(N.mask());
  EXPECT_LT(step.l2_norm(), o.tol * r.f.l2_norm());
}

TEST(InvertNormal, SupportIsPreserved) {
  CutoffSpec cut;
  MetricField m = euclidean_metric();
  InversionOptions o;
  o.tol = 1e-6;
  int n = 64;
  ScalarGrid f = compact_bump(n);
  MaskedNormal N(m, cut, f, o);
  auto r = invert_normal(m, kC, cut, N.apply(f), o);
  double dil = 0.5 + 2.0 * f.spacing(), outside = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k)
    if (f.node(k).norm() > dil) outside = std::max(outside, std::abs(r.f[k]));
  EXPECT_LT(outside, 1e-3 * r.f.max_abs());
}

TEST(InvertNormal, NegativeSettingsThrow) {
  InversionOptions o;
  o.max_iter = -1;
  EXPECT_THROW(invert_normal(euclidean_metric(), kC, CutoffSpec{}, ScalarGrid::square(16), o), InputError);
}

TEST(InvertSinogram, ZeroSinogram) {
  SinogramGrid s(FanBeam{32, 16});
  auto r = invert_sinogram(euclidean_metric(), kC, CutoffSpec{}, s, ScalarGrid::square(32));
  EXPECT_EQ(r.f.max_abs(), 0.0);
}

TEST(InvertSinogram, EuclideanRoundTripAndConsistencyWithNormalRoute) {
  CutoffSpec cut;
  MetricField m = euclidean_metric();
  int n = 64;
  SinogramInversionOptions so;
  so.inversion.tol = 1e-4;
  so.inversion.max_iter = 30;
  so.backproject.n_dirs = 512;
  MaskedNormal N(m, cut, ScalarGrid::square(n), so.inversion);
  ScalarGrid f = masked_bump(n, N);
  SinogramGrid s = xray(m, f, FanBeam{360, 180});
  auto rs = invert_sinogram(m, kC, cut, s, f, so, f);
  EXPECT_LT(rs.trace.error.back(), 2e-2);
  auto rn = invert_normal(m, kC, cut, N.apply(f), so.inversion, f);
  EXPECT_LT((rs.f - rn.f).l2_norm() / f.l2_norm(), 1e-2);
}

TEST(Injectivity, EuclideanProbe) {
  auto rep = injectivity_probe(euclidean_metric(), 16);
  EXPECT_TRUE(rep.pass);
  EXPECT_GT(rep.sigma_min / rep.sigma_max, 1e-6);
  EXPECT_LT(rep.symmetry_defect, 1e-2);
  EXPECT_GT(rep.unknowns, 100);
}

TEST(Injectivity, RefusesNonSimpleMetricAndLargeGrids) {
  EXPECT_THROW(injectivity_probe(constant_curvature_metric(4.0), 16), DomainError);
  EXPECT_THROW(injectivity_probe(euclidean_metric(), 64), InputError);
}

TEST(RegularityGain, SmoothInputHasNoProfileShiftAndIsLinear) {
  CutoffSpec cut;
  MetricField m = euclidean_metric();
  RadialCutoff w{Vec2::Zero(), 0.3, 0.5};
  GaussianField g{0.15, Vec2::Zero()};
  auto f = [&](const Vec2& x) { return w(x) * g(x); };
  auto f2 = [&](const Vec2& x) { return 2.0 * f(x); };
  auto r1 = regularity_gain_demo(m, kC, cut, f, ScalarGrid::square(32), 4);
  auto r2 = regularity_gain_demo(m, kC, cut, f2, ScalarGrid::square(32), 4);
  ASSERT_EQ(r1.iterates.size(), 5u);
  for (std::size_t k = 0; k < r1.iterates.size(); ++k)
    for (std::size_t t = 0; t < r1.t_probe.size(); ++t)
      EXPECT_NEAR(r2.iterates[k][t], 2.0 * r1.iterates[k][t], 1e-10 * r2.iterates[k][t]);
  for (std::size_t t = 0; t < r1.t_probe.size(); ++t)
    EXPECT_NEAR(r2.rf_norms[t], 2.0 * r1.rf_norms[t], 1e-10 * r2.rf_norms[t]);
  for (std::size_t k = 1; k < r1.shift.size(); ++k) EXPECT_LT(r1.shift[k], r1.shift[k - 1]);
  EXPECT_LT(r1.shift.back(), 1e-2);
}

TEST(RegularityGain, CorrectionOfRoughInputStaysBoundedUnderRefinement) {
  CutoffSpec cut;
  MetricField m = euclidean_metric();
  // Disk indicator: H^s only for s < 1/2, so its H^1 norm grows under refinement.
  DiskIndicator disk{0.4, Vec2::Zero()};
  std::vector<double> f_h1, rf_h1;
  for (int n : {32, 64, 128}) {
    auto r = regularity_gain_demo(m, kC, cut, disk, ScalarGrid::square(n), 0, {0.0, 0.5, 1.0});
    f_h1.push_back(r.f_norms.back());
    rf_h1.push_back(r.rf_norms.back());
  }
  for (int k = 0; k < 2; ++k) {
    double f_growth = f_h1[k + 1] / f_h1[k], rf_growth = rf_h1[k + 1] / rf_h1[k];
    EXPECT_GT(f_growth, 1.2);
    EXPECT_LT(rf_growth, f_growth);
  }
  EXPECT_LT(rf_h1[2] / rf_h1[1], 1.1);
}
