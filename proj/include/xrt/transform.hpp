// The geodesic X-ray transform, its backprojection, and the normal operator
// computed both by fused ray integration and by singular-kernel quadrature.
#pragma once

#include "xrt/cutoff.hpp"
#include "xrt/fields.hpp"
#include "xrt/geodesic.hpp"
#include "xrt/grid.hpp"

#include <memory>
#include <span>
#include <utility>

namespace xrt {

struct RayOptions {
  double h_step = 0.0;  // 0: half the grid spacing for grid inputs, default_step otherwise
  unsigned workers = 0;
};

namespace detail {

/// Trapezoid integral of K sampled functions along the unit-speed geodesic
/// from s; sample(x, out) writes K values. Returns false when trapped.
template <class Sample>
bool integrate_along(const MetricField& m, const PhaseState& s, double h, int K, Sample& sample,
                     double* acc) {
  double buf[2][16];
  if (K > 16) throw InputError("at most 16 fields per batch");
  double* prev = buf[0];
  double* cur = buf[1];
  double tp = 0.0;
  bool first = true;
  for (int k = 0; k < K; ++k) acc[k] = 0.0;
  auto res = march_geodesic(m, s, h, 1.0, [&](double t, const PhaseState& st) {
    sample(st.x, cur);
    if (!first) {
      double w = 0.5 * (t - tp);
      for (int k = 0; k < K; ++k) acc[k] += w * (prev[k] + cur[k]);
    }
    first = false;
    std::swap(prev, cur);
    tp = t;
  });
  return res.second;
}

inline auto grid_sampler(std::span<const ScalarGrid> fs) {
  return [fs](const Vec2& x, double* out) {
    for (std::size_t k = 0; k < fs.size(); ++k) out[k] = fs[k].bilinear(x);
  };
}

/// g-orthonormal frame at x (columns).
inline Mat2 orthonormal_frame(const MetricField& m, const Vec2& x) {
  Mat2 g = m.eval(x);
  Eigen::LLT<Mat2> llt(g);
  Mat2 L = llt.matrixL();
  return L.transpose().inverse();
}

}  // namespace detail

/// If on the fan-beam grid for K sampled functions given by sample(x, out).
template <class Sample>
std::vector<SinogramGrid> xray_sampled(const MetricField& m, int K, Sample sample, const FanBeam& fan,
                                       double h_step, unsigned workers) {
  std::vector<SinogramGrid> out(K, SinogramGrid(fan));
  std::size_t n = static_cast<std::size_t>(fan.n_theta) * fan.n_alpha;
  parallel_for(n, workers, [&](std::size_t r) {
    int i = static_cast<int>(r / fan.n_alpha), j = static_cast<int>(r % fan.n_alpha);
    double acc[16];
    auto smp = sample;
    if (!detail::integrate_along(m, fan_state(m, fan.theta(i), fan.alpha(j)), h_step, K, smp, acc))
      throw TraceError("trapped ray in X-ray transform: metric is not simple");
    for (int k = 0; k < K; ++k) out[k](i, j) = acc[k];
  });
  return out;
}

/// X-ray transform of a batch of grid functions sharing one ray set.
inline std::vector<SinogramGrid> xray(const MetricField& m, std::span<const ScalarGrid> fs,
                                      const FanBeam& fan, const RayOptions& opt = {}) {
  if (fs.empty()) return {};
  for (const auto& f : fs) f.require_same_layout(fs[0]);
  double h = opt.h_step > 0.0 ? opt.h_step : 0.5 * fs[0].spacing();
  std::vector<SinogramGrid> all;
  for (std::size_t b = 0; b < fs.size(); b += 16) {
    auto part = fs.subspan(b, std::min<std::size_t>(16, fs.size() - b));
    auto r = xray_sampled(m, static_cast<int>(part.size()), detail::grid_sampler(part), fan, h, opt.workers);
    for (auto& s : r) all.push_back(std::move(s));
  }
  return all;
}

inline SinogramGrid xray(const MetricField& m, const ScalarGrid& f, const FanBeam& fan,
                         const RayOptions& opt = {}) {
  return xray(m, std::span<const ScalarGrid>(&f, 1), fan, opt)[0];
}

/// X-ray transform of a function given pointwise.
template <class F>
SinogramGrid xray_field(const MetricField& m, F f, const FanBeam& fan, const RayOptions& opt = {}) {
  double h = opt.h_step > 0.0 ? opt.h_step : default_step(m);
  return xray_sampled(m, 1, [f](const Vec2& x, double* out) { out[0] = f(x); }, fan, h, opt.workers)[0];
}

// ---------------------------------------------------------------------------

struct BackprojectOptions {
  int n_dirs = 256;
  double h_step = 0.0;  // 0: half the grid spacing
  unsigned workers = 0;
};

/// Fan-beam coordinates (theta, alpha) of the inward state (x_b, v_in) on the boundary.
inline std::pair<double, double> fan_coordinates(const MetricField& m, const Vec2& xb, const Vec2& v_in) {
  double theta = std::atan2(xb[1], xb[0]);
  if (theta < 0.0) theta += two_pi;
  BoundaryFrame f = boundary_frame(m, theta);
  Mat2 g = m.eval(f.x);
  double c = f.nu_in.dot(g * v_in);
  double s = f.tangent.dot(g * v_in);
  double alpha = std::clamp(std::atan2(s, c), -0.5 * pi, 0.5 * pi);
  return {theta, alpha};
}

/// I*h(x) = integral over S_x M of h at the backward boundary point of (x, v).
inline std::vector<ScalarGrid> backproject(const MetricField& m, std::span<const SinogramGrid> hs,
                                           const ScalarGrid& layout, const BackprojectOptions& opt = {}) {
  std::vector<ScalarGrid> out(hs.size(), layout.zeros_like());
  double h = opt.h_step > 0.0 ? opt.h_step : 0.5 * layout.spacing();
  double dbeta = two_pi / opt.n_dirs;
  parallel_for(layout.size(), opt.workers, [&](std::size_t k) {
    Vec2 x = layout.node(k);
    if (x.squaredNorm() >= 1.0) return;
    Mat2 E = detail::orthonormal_frame(m, x);
    std::vector<double> acc(hs.size(), 0.0);
    for (int q = 0; q < opt.n_dirs; ++q) {
      double beta = q * dbeta;
      Vec2 v = std::cos(beta) * E.col(0) + std::sin(beta) * E.col(1);
      PhaseState last{x, -v};
      auto res = march_geodesic(m, {x, -v}, h, 1.0, [&](double, const PhaseState& s) { last = s; });
      if (!res.second) throw TraceError("trapped ray in backprojection: metric is not simple");
      auto [theta, alpha] = fan_coordinates(m, last.x, -last.v);
      for (std::size_t b = 0; b < hs.size(); ++b) acc[b] += hs[b].interpolate(theta, alpha);
    }
    for (std::size_t b = 0; b < hs.size(); ++b) out[b][k] = acc[b] * dbeta;
  });
  return out;
}

inline ScalarGrid backproject(const MetricField& m, const SinogramGrid& hs, const ScalarGrid& layout,
                              const BackprojectOptions& opt = {}) {
  return backproject(m, std::span<const SinogramGrid>(&hs, 1), layout, opt)[0];
}

/// Nf(x) = 2 int_{S_x M} int_0^tau f(gamma_{x,v}(t)) dt dS_x(v), fused loops.
inline std::vector<ScalarGrid> normal_compose(const MetricField& m, std::span<const ScalarGrid> fs,
                                              const BackprojectOptions& opt = {}) {
  if (fs.empty()) return {};
  for (const auto& f : fs) f.require_same_layout(fs[0]);
  const ScalarGrid& layout = fs[0];
  std::vector<ScalarGrid> out(fs.size(), layout.zeros_like());
  double h = opt.h_step > 0.0 ? opt.h_step : 0.5 * layout.spacing();
  double dbeta = two_pi / opt.n_dirs;
  for (std::size_t b0 = 0; b0 < fs.size(); b0 += 16) {
    auto part = fs.subspan(b0, std::min<std::size_t>(16, fs.size() - b0));
    int K = static_cast<int>(part.size());
    parallel_for(layout.size(), opt.workers, [&](std::size_t k) {
      Vec2 x = layout.node(k);
      if (x.squaredNorm() >= 1.0) return;
      Mat2 E = detail::orthonormal_frame(m, x);
      auto smp = detail::grid_sampler(part);
      double sum[16] = {0}, acc[16];
      for (int q = 0; q < opt.n_dirs; ++q) {
        double beta = q * dbeta;
        Vec2 v = std::cos(beta) * E.col(0) + std::sin(beta) * E.col(1);
        if (!detail::integrate_along(m, {x, v}, h, K, smp, acc))
          throw TraceError("trapped ray in normal operator: metric is not simple");
        for (int b = 0; b < K; ++b) sum[b] += acc[b];
      }
      for (int b = 0; b < K; ++b) out[b0 + b][k] = 2.0 * sum[b] * dbeta;
    });
  }
  return out;
}

inline ScalarGrid normal_compose(const MetricField& m, const ScalarGrid& f, const BackprojectOptions& opt = {}) {
  return normal_compose(m, std::span<const ScalarGrid>(&f, 1), opt)[0];
}

/// Pointwise fused normal operator for a function given pointwise.
template <class F>
double normal_compose_at(const MetricField& m, F f, const Vec2& x, int n_dirs = 256, double h_step = 0.0) {
  double h = h_step > 0.0 ? h_step : default_step(m);
  Mat2 E = detail::orthonormal_frame(m, x);
  auto smp = [&f](const Vec2& p, double* out) { out[0] = f(p); };
  double sum = 0.0, acc[1];
  for (int q = 0; q < n_dirs; ++q) {
    double beta = two_pi * q / n_dirs;
    Vec2 v = std::cos(beta) * E.col(0) + std::sin(beta) * E.col(1);
    if (!detail::integrate_along(m, {x, v}, h, 1, smp, acc)) throw TraceError("trapped ray");
    sum += acc[0];
  }
  return 2.0 * sum * two_pi / n_dirs;
}

// ---------------------------------------------------------------------------
// Inner products for the adjoint identity

/// sum a b cos(alpha) |c'|_g dtheta dalpha over the fan-beam grid.
inline double sinogram_inner(const MetricField& m, const SinogramGrid& a, const SinogramGrid& b) {
  const FanBeam& fan = a.fan();
  double s = 0.0;
  for (int i = 0; i < fan.n_theta; ++i) {
    double sp = boundary_frame(m, fan.theta(i)).tangent_speed;
    for (int j = 0; j < fan.n_alpha; ++j) s += a(i, j) * b(i, j) * std::cos(fan.alpha(j)) * sp;
  }
  return s * fan.d_theta() * fan.d_alpha();
}

/// sum a b sqrt(det g) h^2 over nodes inside the unit disk.
inline double volume_inner(const MetricField& m, const ScalarGrid& a, const ScalarGrid& b) {
  a.require_same_layout(b);
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    Vec2 x = a.node(k);
    if (x.squaredNorm() >= 1.0) continue;
    s += a[k] * b[k] * m.sqrt_det(x);
  }
  return s * a.spacing() * a.spacing();
}

inline double volume_norm(const MetricField& m, const ScalarGrid& a) {
  return std::sqrt(volume_inner(m, a, a));
}

// ---------------------------------------------------------------------------
// Normal operator by singular-kernel quadrature

struct KernelQuadrature {
  int n_rho = 128;
  int n_omega = 256;
};

struct GeometryTableOptions {
  double node_spacing = 0.125;
  int n_omega = 64;
  double d_rho = 1.0 / 32.0;
  bool cubic_x = false;  // Catmull-Rom across centers instead of bilinear
  unsigned workers = 0;
};

/// Geometric factor G(x, rho, omega) = a(x, y) rho / d_g(x, y) with
/// y = x - rho omega, and its limit 1/|omega|_{g(x)} at rho = 0.
inline double geometric_factor(const MetricField& m, const Vec2& x, double rho, const Vec2& omega,
                               LogOptions opt = {}) {
  if (rho == 0.0) return 1.0 / tangent_norm(m.eval(x), omega);
  Vec2 y = x - rho * omega;
  LogResult r = log_map_full(m, x, y, opt);
  double d = tangent_norm(m.eval(x), r.w);
  double det = metric_det(m, x, y, r.D);
  if (!(det > 0.0)) throw ConjugatePointError("exponential map singular inside the kernel support");
  return rho / (d * det);
}

/// G(x, k d_rho, angle 2 pi t / n_omega) for k < n_rho, t < n_omega, stored
/// t-major. Each ray is solved outward with the previous solution as seed;
/// entries whose target leaves |y| <= y_reach copy the nearest computed entry.
inline std::vector<double> polar_geometric_factor(const MetricField& m, const Vec2& x, int n_omega, int n_rho,
                                                  double d_rho, double y_reach) {
  std::vector<double> vals(static_cast<std::size_t>(n_omega) * n_rho, 0.0);
  double speed = std::sqrt(m.lambda_max());
  for (int t = 0; t < n_omega; ++t) {
    double ang = two_pi * t / n_omega;
    Vec2 om(std::cos(ang), std::sin(ang));
    double* row = vals.data() + static_cast<std::size_t>(t) * n_rho;
    row[0] = 1.0 / tangent_norm(m.eval(x), om);
    std::vector<char> valid(n_rho, 0);
    valid[0] = 1;
    std::optional<Vec2> w_prev;
    for (int k = 1; k < n_rho; ++k) {
      double rho = k * d_rho;
      Vec2 y = x - rho * om;
      if (y.norm() > y_reach) {
        w_prev.reset();
        continue;
      }
      LogOptions lo;
      lo.n_steps = 4 + static_cast<int>(std::ceil(rho * speed / 0.04));
      if (w_prev) lo.seed = *w_prev * (static_cast<double>(k) / (k - 1));
      LogResult r = log_map_full(m, x, y, lo);
      w_prev = r.w;
      double d = tangent_norm(m.eval(x), r.w);
      double det = metric_det(m, x, y, r.D);
      if (!(det > 0.0)) throw ConjugatePointError("exponential map singular inside the kernel support");
      row[k] = rho / (d * det);
      valid[k] = 1;
    }
    int last = 0;
    for (int k = 1; k < n_rho; ++k) {
      if (valid[k]) {
        for (int q = last + 1; q < k; ++q) row[q] = (q - last <= k - q) ? row[last] : row[k];
        last = k;
      }
    }
    for (int q = last + 1; q < n_rho; ++q) row[q] = row[last];
  }
  return vals;
}

/// G tabulated on a coarse lattice of centers x, uniform in rho and in the
/// angle of omega, and interpolated linearly in rho and angle and bilinearly
/// or bicubically across centers.
class GeometryTable {
 public:
  /// Centers with |x| <= x_reach, targets with |y| <= y_reach.
  GeometryTable(const MetricField& m, double x_reach, double y_reach, const GeometryTableOptions& opt = {})
      : s_(opt.node_spacing), n_omega_(opt.n_omega), d_rho_(opt.d_rho), cubic_(opt.cubic_x) {
    int ring = cubic_ ? 2 : 1;
    M_ = static_cast<int>(std::ceil(x_reach / s_)) + ring;
    int side = 2 * M_ + 1;
    n_rho_ = static_cast<int>(std::ceil((x_reach + s_ * (ring + 0.5) + y_reach) / d_rho_)) + 2;
    nodes_.assign(static_cast<std::size_t>(side) * side, {});
    double node_reach = x_reach + ring * s_ * std::sqrt(2.0) + 1e-12;
    unit_ = true;
    parallel_for(nodes_.size(), opt.workers, [&](std::size_t k) {
      int i = static_cast<int>(k % side) - M_, j = static_cast<int>(k / side) - M_;
      Vec2 x = s_ * Vec2(i, j);
      if (x.norm() > node_reach) return;
      // Outer-ring centers of the cubic stencil may leave the metric's domain; those queries fall back to bilinear.
      if (cubic_ && x.norm() > x_reach + s_ * std::sqrt(2.0) + 1e-12 && x.norm() >= m.outer_radius()) return;
      nodes_[k] = build_node(m, x, y_reach);
    });
    for (const auto& n : nodes_)
      for (double v : n)
        if (v != 1.0) unit_ = false;
  }

  /// True when every entry equals 1 (Euclidean metric).
  bool unit() const { return unit_; }

  double operator()(const Vec2& x, double rho, double angle) const {
    if (unit_) return 1.0;
    double u = x[0] / s_ + M_, v = x[1] / s_ + M_;
    int i = static_cast<int>(std::floor(u)), j = static_cast<int>(std::floor(v));
    double a = u - i, b = v - j;
    double r = rho / d_rho_;
    int kr = std::min(static_cast<int>(r), n_rho_ - 2);
    double cr = r - kr;
    double w = angle / two_pi * n_omega_;
    w -= n_omega_ * std::floor(w / n_omega_);
    int t0 = static_cast<int>(w) % n_omega_;
    int t1 = (t0 + 1) % n_omega_;
    double ct = w - std::floor(w);
    auto node_val = [&](int ii, int jj) {
      const auto& nd = nodes_[static_cast<std::size_t>(jj) * (2 * M_ + 1) + ii];
      if (nd.empty()) throw DomainError("geometry table queried outside its reach");
      const double* p0 = nd.data() + static_cast<std::size_t>(t0) * n_rho_ + kr;
      const double* p1 = nd.data() + static_cast<std::size_t>(t1) * n_rho_ + kr;
      return (1 - ct) * ((1 - cr) * p0[0] + cr * p0[1]) + ct * ((1 - cr) * p1[0] + cr * p1[1]);
    };
    if (cubic_ && i >= 1 && j >= 1 && i + 2 <= 2 * M_ && j + 2 <= 2 * M_) {
      bool full = true;
      for (int jj = j - 1; jj <= j + 2 && full; ++jj)
        for (int ii = i - 1; ii <= i + 2; ++ii)
          if (nodes_[static_cast<std::size_t>(jj) * (2 * M_ + 1) + ii].empty()) full = false;
      if (full) {
        double wa[4], wb[4];
        catmull_rom(a, wa);
        catmull_rom(b, wb);
        double sum = 0.0;
        for (int q = 0; q < 4; ++q) {
          double row = 0.0;
          for (int p = 0; p < 4; ++p) row += wa[p] * node_val(i - 1 + p, j - 1 + q);
          sum += wb[q] * row;
        }
        return sum;
      }
    }
    return (1 - a) * (1 - b) * node_val(i, j) + a * (1 - b) * node_val(i + 1, j) +
           (1 - a) * b * node_val(i, j + 1) + a * b * node_val(i + 1, j + 1);
  }

 private:
  static void catmull_rom(double t, double w[4]) {
    double t2 = t * t, t3 = t2 * t;
    w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
    w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
    w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
    w[3] = 0.5 * (t3 - t2);
  }

  std::vector<double> build_node(const MetricField& m, const Vec2& x, double y_reach) const {
    return polar_geometric_factor(m, x, n_omega_, n_rho_, d_rho_, y_reach);
  }

  double s_;
  int n_omega_;
  double d_rho_;
  int M_ = 0;
  int n_rho_ = 0;
  bool cubic_ = false;
  bool unit_ = false;
  std::vector<std::vector<double>> nodes_;
};

/// The cut-off normal operator f -> int K~(x, y) f(y) dy on a grid, with
/// K~ = psi(x) 2 a(x,y) d_g(x,y)^{-1} sqrt(det g(y)) phi(y), evaluated in
/// polar coordinates y = x - rho omega around each output point.
///
/// Inputs must vanish outside the disk of radius `support_radius`; the rho
/// range of each direction stops where that disk ends.
class NormalKernel {
 public:
  NormalKernel(const MetricField& m, const CutoffSpec& cut, const ScalarGrid& layout, double support_radius,
               KernelQuadrature quad = {}, GeometryTableOptions topt = {})
      : m_(m), cut_(cut), layout_(layout.zeros_like()), quad_(quad) {
    cut.validate();
    R_ = std::min({support_radius, cut.phi.r_out, 1.0});
    double x_reach = 0.0;
    for (std::size_t k = 0; k < layout_.size(); ++k) {
      Vec2 x = layout_.node(k);
      if (x.squaredNorm() < 1.0 && cut_.psi(x) > 0.0) {
        rows_.push_back(k);
        x_reach = std::max(x_reach, x.norm());
      }
    }
    weight_ = layout_.zeros_like();
    for (std::size_t k = 0; k < layout_.size(); ++k) {
      Vec2 y = layout_.node(k);
      if (y.norm() <= R_ + 1e-12) weight_[k] = cut_.phi(y) * m_.sqrt_det(y);
    }
    table_ = std::make_shared<GeometryTable>(m_, x_reach, R_ + topt.node_spacing * 1.5, topt);
  }

  const ScalarGrid& layout() const { return layout_; }
  const std::vector<std::size_t>& rows() const { return rows_; }
  double support_radius() const { return R_; }
  const GeometryTable& table() const { return *table_; }

  /// Parameter interval [lo, hi] of the line s -> x - s omega inside the
  /// support disk; empty when lo >= hi.
  std::pair<double, double> chord(const Vec2& x, const Vec2& om) const {
    double b = x.dot(om);
    double disc = b * b - (x.squaredNorm() - R_ * R_);
    if (disc <= 0.0) return {0.0, 0.0};
    double sq = std::sqrt(disc);
    return {b - sq, b + sq};
  }

  /// Visits every quadrature sample for output point x: emit(y, weight) with
  /// the full kernel weight (excluding the input's phi sqrt(det g) factor).
  /// Each direction pair omega, -omega is one line through x; the integrand is
  /// smooth across s = 0, so the midpoint rule along the chord converges
  /// spectrally for smooth inputs vanishing at the chord ends.
  template <class Emit>
  void samples(const Vec2& x, const KernelQuadrature& q, Emit&& emit) const {
    double ps = cut_.psi(x);
    if (ps == 0.0) return;
    int n_lines = std::max(1, q.n_omega / 2), n_s = 2 * q.n_rho;
    double dom = pi / n_lines;
    for (int iw = 0; iw < n_lines; ++iw) {
      double ang = (iw + 0.5) * dom;
      Vec2 om(std::cos(ang), std::sin(ang));
      auto [lo, hi] = chord(x, om);
      if (hi <= lo) continue;
      double ds = (hi - lo) / n_s;
      for (int k = 0; k < n_s; ++k) {
        double s = lo + (k + 0.5) * ds;
        double g = s >= 0.0 ? (*table_)(x, s, ang) : (*table_)(x, -s, ang + pi);
        emit(Vec2(x - s * om), 2.0 * ps * g * ds * dom);
      }
    }
  }

  void check_support(const ScalarGrid& f) const {
    f.require_same_layout(layout_);
    double tol = R_ + layout_.spacing() * std::sqrt(2.0);
    for (std::size_t k = 0; k < f.size(); ++k)
      if (f[k] != 0.0 && layout_.node(k).norm() > tol)
        throw InputError("input not supported in the kernel's support disk");
  }

  ScalarGrid apply(const ScalarGrid& f, unsigned workers = 0) const {
    check_support(f);
    ScalarGrid F = f.times(weight_);
    ScalarGrid out = layout_.zeros_like();
    parallel_for(rows_.size(), workers, [&](std::size_t r) {
      std::size_t k = rows_[r];
      double s = 0.0;
      samples(layout_.node(k), quad_, [&](const Vec2& y, double w) { s += w * F.bilinear(y); });
      out[k] = s;
    });
    return out;
  }

  /// Value at one point for f given pointwise; the quadrature may be refined.
  template <class Fn>
  double at(const Vec2& x, Fn&& f, std::optional<KernelQuadrature> q = std::nullopt) const {
    double s = 0.0;
    samples(x, q ? *q : quad_, [&](const Vec2& y, double w) {
      double fy = f(y);
      if (fy != 0.0) s += w * fy * cut_.phi(y) * m_.sqrt_det(y);
    });
    return s;
  }

  /// Dense matrix of the discrete operator from the nodes `cols` to the nodes `rows`.
  Eigen::MatrixXd assemble(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols,
                           unsigned workers = 0) const {
    std::vector<std::ptrdiff_t> col_of(layout_.size(), -1);
    for (std::size_t c = 0; c < cols.size(); ++c) col_of[cols[c]] = static_cast<std::ptrdiff_t>(c);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> A =
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(rows.size(), cols.size());
    parallel_for(rows.size(), workers, [&](std::size_t r) {
      double* row = A.data() + r * cols.size();
      samples(layout_.node(rows[r]), quad_, [&](const Vec2& y, double w) {
        std::size_t idx[4];
        double wt[4];
        int n = layout_.stencil(y, idx, wt);
        for (int q = 0; q < n; ++q) {
          std::ptrdiff_t c = col_of[idx[q]];
          if (c >= 0) row[c] += w * wt[q] * weight_[idx[q]];
        }
      });
    });
    return A;
  }

 private:
  MetricField m_;
  CutoffSpec cut_;
  ScalarGrid layout_;
  KernelQuadrature quad_;
  double R_ = 1.0;
  std::vector<std::size_t> rows_;
  ScalarGrid weight_;
  std::shared_ptr<GeometryTable> table_;
};

/// One-shot convenience wrapper around NormalKernel.
inline ScalarGrid normal_kernel(const MetricField& m, const ScalarGrid& f, const CutoffSpec& cut,
                                KernelQuadrature quad = {}, unsigned workers = 0) {
  NormalKernel nk(m, cut, f, f.support_radius(), quad, GeometryTableOptions{.workers = workers});
  return nk.apply(f, workers);
}

// ---------------------------------------------------------------------------

struct NormalIdentityOptions {
  int grid_n = 64;
  FanBeam fan{180, 90};
  int n_dirs = 256;
  KernelQuadrature quad{};
  double k_max = 6.0;
  double support = 0.6;
  unsigned workers = 0;
};

struct NormalIdentityReport {
  int trials = 0;
  double ratio_compose = 0.0;          // max ||I*I f - N_compose f|| / ||f||
  double ratio_kernel = 0.0;           // max ||I*I f - N_kernel f|| / ||f||
  double ratio_compose_kernel = 0.0;   // max ||N_compose f - N_kernel f|| / ||f||
};

/// Random band-limited test fields on an n x n grid over [-1, 1]^2.
inline std::vector<ScalarGrid> random_fields(int trials, std::uint64_t seed, int n, double k_max, double support) {
  std::vector<ScalarGrid> fs;
  for (int t = 0; t < trials; ++t) {
    RandomSmoothField rf(seed + 7919 * static_cast<std::uint64_t>(t), 12, k_max, support);
    fs.push_back(ScalarGrid::sample(n, rf));
  }
  return fs;
}

/// Compares I*I f with N f from both constructions on random fields.
inline NormalIdentityReport verify_normal_identity(const MetricField& m, int trials, std::uint64_t seed,
                                                   const NormalIdentityOptions& opt = {}) {
  NormalIdentityReport rep;
  rep.trials = trials;
  if (trials <= 0) return rep;
  auto fs = random_fields(trials, seed, opt.grid_n, opt.k_max, opt.support);
  RayOptions ro{0.0, opt.workers};
  auto sinos = xray(m, fs, opt.fan, ro);
  auto ii = backproject(m, sinos, fs[0], {opt.n_dirs, 0.0, opt.workers});
  auto nc = normal_compose(m, fs, {opt.n_dirs, 0.0, opt.workers});
  NormalKernel nk(m, CutoffSpec::identity_on(1.0), fs[0], opt.support + fs[0].spacing() * 1.5, opt.quad,
                  GeometryTableOptions{.workers = opt.workers});
  for (int t = 0; t < trials; ++t) {
    ScalarGrid nkf = nk.apply(fs[t], opt.workers);
    double fn = volume_norm(m, fs[t]);
    if (fn == 0.0) continue;
    rep.ratio_compose = std::max(rep.ratio_compose, volume_norm(m, ii[t] - nc[t]) / fn);
    rep.ratio_kernel = std::max(rep.ratio_kernel, volume_norm(m, ii[t] - nkf) / fn);
    rep.ratio_compose_kernel = std::max(rep.ratio_compose_kernel, volume_norm(m, nc[t] - nkf) / fn);
  }
  return rep;
}

}  // namespace xrt
