#include "xrt/transform.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace xrt;

namespace {

// Euclidean signed distance from the origin of the fan-beam line (theta, alpha).
double line_distance(double alpha) { return std::abs(std::sin(alpha)); }

SinogramGrid smooth_sinogram(const FanBeam& fan, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double a[6];
  for (double& v : a) v = u(rng);
  SinogramGrid s(fan);
  for (int i = 0; i < fan.n_theta; ++i)
    for (int j = 0; j < fan.n_alpha; ++j) {
      double t = fan.theta(i), al = fan.alpha(j);
      s(i, j) = a[0] + a[1] * std::cos(t) + a[2] * std::sin(2 * t) + a[3] * std::cos(al) +
                a[4] * std::sin(al) * std::cos(t) + a[5] * std::cos(3 * al);
    }
  return s;
}

}  // namespace

TEST(Cutoff, SmoothstepEndpointsAndRange) {
  EXPECT_EQ(smoothstep(0.0), 0.0);
  EXPECT_EQ(smoothstep(1.0), 1.0);
  EXPECT_NEAR(smoothstep(0.5), 0.5, 1e-15);
  for (int k = 0; k <= 100; ++k) {
    double t = k / 100.0;
    EXPECT_GE(smoothstep(t), 0.0);
    EXPECT_LE(smoothstep(t), 1.0);
  }
  // Derivative matches central differences.
  for (double t : {0.1, 0.3, 0.6, 0.85}) {
    double h = 1e-6;
    EXPECT_NEAR(smoothstep_deriv(t), (smoothstep(t + h) - smoothstep(t - h)) / (2 * h), 1e-6);
  }
}

TEST(Cutoff, RadialCutoffValues) {
  RadialCutoff c{Vec2::Zero(), 0.25, 0.5};
  EXPECT_EQ(c(Vec2(0.1, 0.1)), 1.0);
  EXPECT_EQ(c(Vec2(0.5, 0.0)), 0.0);
  EXPECT_EQ(c(Vec2(0.7, 0.0)), 0.0);
  EXPECT_THROW((RadialCutoff{Vec2::Zero(), 0.5, 0.5}.validate("x")), InputError);
  CutoffSpec bad;
  bad.zeta_in = 5.0;
  EXPECT_THROW(bad.validate(), InputError);
}

TEST(XRay, DiskThroughOriginHasChordLength) {
  auto m = euclidean_metric();
  FanBeam fan{8, 9};  // alpha index 4 is the ray through the origin
  SinogramGrid s = xray_field(m, DiskIndicator{0.5, Vec2::Zero()}, fan, RayOptions{1e-4, 0});
  for (int i = 0; i < fan.n_theta; ++i) EXPECT_NEAR(s(i, 4), 1.0, 1e-3);
}

TEST(XRay, ZeroInputGivesZeroSinogram) {
  auto m = gaussian_metric(0.2);
  ScalarGrid f = ScalarGrid::square(32);
  SinogramGrid s = xray(m, f, FanBeam{16, 8});
  EXPECT_EQ(s.max_abs(), 0.0);
}

TEST(XRay, GaussianMatchesAnalyticLineIntegral) {
  auto m = euclidean_metric();
  GaussianField gf{0.15, Vec2::Zero()};
  FanBeam fan{36, 30};
  SinogramGrid s = xray_field(m, gf, fan, RayOptions{2e-3, 0});
  double peak = gf.line_integral(0.0), err = 0.0;
  for (int i = 0; i < fan.n_theta; ++i)
    for (int j = 0; j < fan.n_alpha; ++j)
      err = std::max(err, std::abs(s(i, j) - gf.line_integral(line_distance(fan.alpha(j)))));
  EXPECT_LT(err / peak, 1e-3);
}

TEST(XRay, GridSampledGaussianCloseToAnalytic) {
  auto m = euclidean_metric();
  GaussianField gf{0.15, Vec2::Zero()};
  ScalarGrid f = ScalarGrid::sample(128, gf);
  FanBeam fan{24, 20};
  SinogramGrid s = xray(m, f, fan);
  double peak = gf.line_integral(0.0), err = 0.0;
  for (int i = 0; i < fan.n_theta; ++i)
    for (int j = 0; j < fan.n_alpha; ++j)
      err = std::max(err, std::abs(s(i, j) - gf.line_integral(line_distance(fan.alpha(j)))));
  // Bilinear sampling error h^2/8 |f''| bounds the discrepancy.
  double h = f.spacing();
  EXPECT_LT(err / peak, 2.0 * h * h / 8.0 / (0.15 * 0.15));
}

TEST(XRay, LinearityOnIdenticalRays) {
  auto m = gaussian_metric(0.2);
  auto fs = random_fields(2, 11, 32, 6.0, 0.6);
  ScalarGrid comb = 2.0 * fs[0] + (-3.0) * fs[1];
  FanBeam fan{24, 12};
  auto s = xray(m, std::span<const ScalarGrid>(fs), fan);
  SinogramGrid sc = xray(m, comb, fan);
  double scale = sc.max_abs(), err = 0.0;
  for (std::size_t k = 0; k < sc.size(); ++k)
    err = std::max(err, std::abs(sc.values()[k] - (2.0 * s[0].values()[k] - 3.0 * s[1].values()[k])));
  EXPECT_LT(err / scale, 1e-12);
}

TEST(XRay, PositivityAndSupport) {
  auto m = euclidean_metric();
  DiskIndicator disk{0.3, Vec2::Zero()};
  ScalarGrid f = ScalarGrid::sample(64, disk);
  FanBeam fan{24, 40};
  SinogramGrid s = xray(m, f, fan);
  double margin = f.support_radius();
  for (int i = 0; i < fan.n_theta; ++i)
    for (int j = 0; j < fan.n_alpha; ++j) {
      EXPECT_GE(s(i, j), 0.0);
      if (line_distance(fan.alpha(j)) > margin) {
        EXPECT_EQ(s(i, j), 0.0);
      }
    }
}

TEST(Backproject, ConstantSinogramGivesCircleLength) {
  auto m = euclidean_metric();
  SinogramGrid h(FanBeam{32, 16});
  for (double& v : h.values()) v = 1.0;
  ScalarGrid layout = ScalarGrid::square(16);
  ScalarGrid b = backproject(m, h, layout);
  for (std::size_t k = 0; k < b.size(); ++k)
    if (layout.node(k).norm() < 0.95) {
      EXPECT_NEAR(b[k], two_pi, 1e-9);
    }
}

TEST(Backproject, ZeroAndPositivity) {
  auto m = gaussian_metric(0.2);
  ScalarGrid layout = ScalarGrid::square(16);
  SinogramGrid z(FanBeam{16, 8});
  EXPECT_EQ(backproject(m, z, layout).max_abs(), 0.0);
  SinogramGrid p(FanBeam{16, 8});
  for (std::size_t k = 0; k < p.size(); ++k) p.values()[k] = 1.0 + std::sin(0.1 * k) * 0.5;
  ScalarGrid b = backproject(m, p, layout);
  for (double v : b.values()) EXPECT_GE(v, 0.0);
}

TEST(Backproject, AdjointOfXRay) {
  for (auto m : {euclidean_metric(), gaussian_metric(0.2)}) {
    auto fs = random_fields(1, 5, 48, 6.0, 0.6);
    FanBeam fan{90, 45};
    SinogramGrid If = xray(m, fs[0], fan);
    SinogramGrid h = smooth_sinogram(fan, 17);
    ScalarGrid Ih = backproject(m, h, fs[0]);
    double lhs = sinogram_inner(m, If, h);
    double rhs = volume_inner(m, fs[0], Ih);
    EXPECT_LT(std::abs(lhs - rhs) / std::abs(rhs), 1e-2) << m.name();
  }
}

TEST(Backproject, AdjointDefectShrinksUnderRefinement) {
  auto m = gaussian_metric(0.2);
  std::vector<double> defect;
  for (int level : {0, 1, 2}) {
    int n = 16 << level;
    FanBeam fan{24 << level, 12 << level};
    RandomSmoothField rf(23, 12, 4.0, 0.6);
    ScalarGrid f = ScalarGrid::sample(n, rf);
    SinogramGrid If = xray(m, f, fan);
    SinogramGrid h = smooth_sinogram(fan, 29);
    ScalarGrid Ih = backproject(m, h, f, BackprojectOptions{16 << level, 0.0, 0});
    double lhs = sinogram_inner(m, If, h), rhs = volume_inner(m, f, Ih);
    defect.push_back(std::abs(lhs - rhs) / std::abs(rhs));
  }
  EXPECT_LT(defect[1], defect[0]);
  EXPECT_LT(defect[2], defect[1]);
}

TEST(Normal, DiskValueAtOriginBothConstructions) {
  auto m = euclidean_metric();
  DiskIndicator disk{0.5, Vec2::Zero()};
  double nc = normal_compose_at(m, disk, Vec2::Zero(), 512, 1e-4);
  EXPECT_NEAR(nc / two_pi, 1.0, 1e-3);
  ScalarGrid layout = ScalarGrid::square(32);
  NormalKernel nk(m, CutoffSpec::identity_on(1.0), layout, 0.5, KernelQuadrature{4096, 64});
  double nkv = nk.at(Vec2::Zero(), disk);
  EXPECT_NEAR(nkv / two_pi, 1.0, 1e-3);
}

TEST(Normal, ZeroInput) {
  auto m = gaussian_metric(0.2);
  ScalarGrid f = ScalarGrid::square(16);
  EXPECT_EQ(normal_compose(m, f).max_abs(), 0.0);
  EXPECT_EQ(normal_kernel(m, f, CutoffSpec::identity_on(1.0)).max_abs(), 0.0);
  NormalIdentityReport r = verify_normal_identity(m, 0, 1);
  EXPECT_EQ(r.ratio_compose, 0.0);
}

TEST(Normal, CurvedPointValueComposeVersusKernel) {
  auto m = gaussian_metric(0.2);
  GaussianField gf{0.15, Vec2(0.1, -0.05)};
  ScalarGrid layout = ScalarGrid::square(32);
  NormalKernel nk(m, CutoffSpec::identity_on(1.0), layout, 0.8, KernelQuadrature{512, 256});
  for (Vec2 x : {Vec2(0, 0), Vec2(0.3, 0.2), Vec2(-0.5, 0.1)}) {
    double a = normal_compose_at(m, gf, x, 512, 1e-3);
    double b = nk.at(x, gf);
    EXPECT_LT(std::abs(a - b) / std::abs(a), 1e-2) << x.transpose();
  }
}

TEST(Normal, PositiveForPositiveInput) {
  auto m = gaussian_metric(0.2);
  ScalarGrid f = ScalarGrid::sample(32, GaussianField{0.15, Vec2::Zero()});
  ScalarGrid n = normal_compose(m, f, BackprojectOptions{64, 0.0, 0});
  for (double v : n.values()) EXPECT_GE(v, 0.0);
}

TEST(Normal, KernelOperatorIsSymmetric) {
  auto m = gaussian_metric(0.2);
  auto fs = random_fields(2, 3, 32, 5.0, 0.6);
  NormalKernel nk(m, CutoffSpec::identity_on(1.0), fs[0], 0.7, KernelQuadrature{128, 128});
  double a = volume_inner(m, nk.apply(fs[0]), fs[1]);
  double b = volume_inner(m, fs[0], nk.apply(fs[1]));
  EXPECT_LT(std::abs(a - b) / std::abs(a), 1e-2);
}

TEST(Normal, AssembledMatrixMatchesApply) {
  auto m = gaussian_metric(0.2);
  ScalarGrid f = ScalarGrid::sample(16, RandomSmoothField(9, 8, 3.0, 0.6));
  NormalKernel nk(m, CutoffSpec::identity_on(1.0), f, 0.7, KernelQuadrature{64, 64});
  std::vector<std::size_t> all(f.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  const auto& rows = nk.rows();
  Eigen::MatrixXd A = nk.assemble(rows, all);
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(f.values().data(), f.size());
  Eigen::VectorXd Av = A * v;
  ScalarGrid Nf = nk.apply(f);
  for (std::size_t r = 0; r < rows.size(); ++r) EXPECT_NEAR(Av[r], Nf[rows[r]], 1e-12 * (1.0 + Nf.max_abs()));
}

TEST(Normal, IdentityOnRandomFieldsEuclidean) {
  NormalIdentityOptions opt;
  opt.grid_n = 48;
  opt.fan = FanBeam{360, 180};
  auto r = verify_normal_identity(euclidean_metric(), 5, 2024, opt);
  EXPECT_LT(r.ratio_compose, 1e-2);
  EXPECT_LT(r.ratio_kernel, 1e-2);
  EXPECT_LT(r.ratio_compose_kernel, 1e-2);
}

TEST(Normal, IdentityOnRandomFieldsCurved) {
  NormalIdentityOptions opt;
  opt.grid_n = 48;
  auto r = verify_normal_identity(gaussian_metric(0.2), 5, 2024, opt);
  EXPECT_LT(r.ratio_compose, 2e-2);
  EXPECT_LT(r.ratio_kernel, 2e-2);
  EXPECT_LT(r.ratio_compose_kernel, 1e-2);
}
