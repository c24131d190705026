// The kernel k(x, z) = K~(x, x - z) of the cut-off normal operator, its
// factorization through h(x, r, omega), the split k = k_{-1} + r, and the
// Fourier-side symbols a = F_z k, a_{-1}, b and c with their seminorm checks.
//
// Fourier convention: F g(xi) = int e^{-i z.xi} g(z) dz, no prefactor.
#pragma once

#include "xrt/cutoff.hpp"
#include "xrt/fft.hpp"
#include "xrt/numerics.hpp"
#include "xrt/transform.hpp"

#include <array>
#include <cmath>

namespace xrt {

// ---------------------------------------------------------------------------
// Kernel and h

namespace detail {

/// h along the whole line through x; for r < 0 the target is x + |r| omega.
inline double h_line(const MetricField& m, const CutoffSpec& cut, const Vec2& x, double r, const Vec2& om,
                     const LogOptions& opt) {
  m.check_domain(x);
  double psi = cut.psi(x);
  if (r == 0.0) return 2.0 * psi * cut.phi(x) * m.sqrt_det(x) / tangent_norm(m.eval(x), om);
  Vec2 y = x - r * om;
  m.check_domain(y);
  double ph = cut.phi(y);
  if (psi == 0.0 || ph == 0.0) return 0.0;
  double G = geometric_factor(m, x, std::abs(r), r > 0.0 ? om : Vec2(-om), opt);
  return 2.0 * psi * ph * m.sqrt_det(y) * G;
}

inline void require_unit(const Vec2& om) {
  if (std::abs(om.norm() - 1.0) > 1e-12) throw InputError("omega must be a Euclidean unit vector");
}

}  // namespace detail

/// h(x, r, omega) = psi(x) 2 a(x,y) sqrt(det g(y)) phi(y) r / d_g(x,y), y = x - r omega;
/// at r = 0 the limit 2 psi(x) phi(x) sqrt(det g(x)) / |omega|_{g(x)}.
inline double h_eval(const MetricField& m, const CutoffSpec& cut, const Vec2& x, double r, const Vec2& omega,
                     const LogOptions& opt = {}) {
  if (!(r >= 0.0)) throw InputError("h_eval needs r >= 0");
  detail::require_unit(omega);
  return detail::h_line(m, cut, x, r, omega, opt);
}

/// k(x, z) = psi(x) 2 a(x, x-z) d_g(x, x-z)^{-1} sqrt(det g(x-z)) phi(x-z).
inline double kernel_eval(const MetricField& m, const CutoffSpec& cut, const Vec2& x, const Vec2& z,
                          const LogOptions& opt = {}) {
  double r = z.norm();
  if (r == 0.0) throw InputError("kernel is singular at z = 0");
  return detail::h_line(m, cut, x, r, z / r, opt) / r;
}

/// k, chi k_{-1} and chi r on a polar grid z = rho (cos w, sin w) about x.
struct KernelSlice {
  Vec2 x = Vec2::Zero();
  std::vector<double> rho;    // radial nodes, all > 0
  std::vector<double> omega;  // angles
  std::vector<double> h0;     // h(x, 0, omega_q)
  // index q * rho.size() + l
  std::vector<double> h, k, chi, k_minus1, r;  // chi, k_minus1 and r carry the factor chi(z)

  std::size_t index(std::size_t q, std::size_t l) const { return q * rho.size() + l; }

  /// max |chi k - chi k_{-1} - chi r| over the slice.
  double recomposition_defect() const {
    double d = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) d = std::max(d, std::abs(chi[i] * k[i] - k_minus1[i] - r[i]));
    return d;
  }
  /// max |r| / chi over nodes with chi > 0.
  double remainder_bound() const {
    double b = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i)
      if (chi[i] > 0.0) b = std::max(b, std::abs(r[i]) / chi[i]);
    return b;
  }
};

struct SplitOptions {
  int n_steps = 64;     // fixed exp-map steps so that h is a smooth function of r
  double tol = 2e-15;   // shooting residual
};

namespace detail {

/// Parameters t in (0, 1) where |x - rho t omega| crosses a joint radius of phi.
inline std::vector<double> phi_joints(const CutoffSpec& cut, const Vec2& x, double rho, const Vec2& om) {
  std::vector<double> t{0.0, 1.0};
  double b = x.dot(om);
  for (double R : {cut.phi.r_in, cut.phi.r_out}) {
    double disc = b * b - (x.squaredNorm() - R * R);
    if (disc <= 0.0) continue;
    for (double sgn : {-1.0, 1.0}) {
      double sr = (b + sgn * std::sqrt(disc)) / rho;
      if (sr > 1e-12 && sr < 1.0 - 1e-12) t.push_back(sr);
    }
  }
  std::sort(t.begin(), t.end());
  return t;
}

}  // namespace detail

/// k_{-1} = |z|^{-1} h(x, 0, z/|z|) and r = int_0^1 d_r h(x, |z| t, z/|z|) dt, both times chi(z).
/// d_r h by five-point central differences with step 1e-4 (1 + r), the t-integral by 16-point Gauss-Legendre
/// on panels split where phi changes polynomial piece.
inline KernelSlice split_kernel(const MetricField& m, const CutoffSpec& cut, const Vec2& x,
                                const std::vector<double>& rho_nodes, int n_omega, const SplitOptions& sopt = {}) {
  if (n_omega < 1) throw InputError("split_kernel needs n_omega >= 1");
  for (double r : rho_nodes)
    if (!(r > 0.0)) throw InputError("split_kernel radial nodes must be positive");
  LogOptions lo;
  lo.n_steps = sopt.n_steps;
  lo.tol = sopt.tol;
  KernelSlice s;
  s.x = x;
  s.rho = rho_nodes;
  const auto& gl = gauss16();
  std::size_t nr = rho_nodes.size();
  s.h.resize(nr * n_omega);
  s.k = s.chi = s.k_minus1 = s.r = s.h;
  for (int q = 0; q < n_omega; ++q) {
    double ang = two_pi * q / n_omega;
    s.omega.push_back(ang);
    Vec2 om(std::cos(ang), std::sin(ang));
    double h0 = detail::h_line(m, cut, x, 0.0, om, lo);
    s.h0.push_back(h0);
    for (std::size_t l = 0; l < nr; ++l) {
      double rz = rho_nodes[l];
      std::size_t i = s.index(q, l);
      s.h[i] = detail::h_line(m, cut, x, rz, om, lo);
      s.k[i] = s.h[i] / rz;
      s.chi[i] = cut.chi.radial(rz);
      double integral = 0.0;
      auto joints = detail::phi_joints(cut, x, rz, om);
      for (std::size_t p = 0; p + 1 < joints.size(); ++p)
        integral += gauss_integrate(gl, joints[p], joints[p + 1], [&](double t) {
          double rg = rz * t;
          double dlt = 1e-4 * (1.0 + rg);
          auto hr = [&](double r) { return detail::h_line(m, cut, x, r, om, lo); };
          return (8.0 * (hr(rg + dlt) - hr(rg - dlt)) - (hr(rg + 2 * dlt) - hr(rg - 2 * dlt))) / (12.0 * dlt);
        });
      s.k_minus1[i] = s.chi[i] * h0 / rz;
      s.r[i] = s.chi[i] * integral;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Frequency grids and symbol grids

/// xi = radii[ir] (cos, sin)(2 pi d / n_dirs).
struct FrequencyGrid {
  std::vector<double> radii;
  int n_dirs = 16;

  static FrequencyGrid geometric(double lo, double hi, int n, int dirs = 16) {
    if (!(lo > 0.0 && hi > lo) || n < 2 || dirs < 1) throw InputError("bad geometric frequency grid");
    FrequencyGrid f;
    f.n_dirs = dirs;
    for (int k = 0; k < n; ++k) f.radii.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / (n - 1)));
    return f;
  }
  Vec2 xi(int ir, int d) const {
    double a = two_pi * d / n_dirs;
    return radii[ir] * Vec2(std::cos(a), std::sin(a));
  }
};

/// Derivative channels, in order: alpha = (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).
inline constexpr int kChannels = 6;
inline constexpr std::array<std::array<int, 2>, kChannels> kAlpha = {
    {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}}};
inline int alpha_order(int ch) { return kAlpha[ch][0] + kAlpha[ch][1]; }

/// Values of p(x_i, xi_j) and its xi-derivatives up to second order, with
/// symbol-class metadata.
struct SymbolGrid {
  std::vector<Vec2> x;
  FrequencyGrid freq;
  std::vector<std::array<cplx, kChannels>> values;  // index (ix * radii + ir) * n_dirs + d
  int alpha_max = 2;
  double order_m = 0.0;
  double regularity_r = 0.0;
  int budget_L = 2;
  double rho_class = 1.0;
  double delta_class = 0.0;
  double x_step = 0.0;  // > 0: x comes in groups {c, c + s e1, c - s e1, c + s e2, c - s e2}
  double alias_fraction = 0.0;
  bool alias_warning = false;
  std::string label;

  std::size_t index(std::size_t ix, int ir, int d) const {
    return (ix * freq.radii.size() + ir) * freq.n_dirs + d;
  }
  const std::array<cplx, kChannels>& at(std::size_t ix, int ir, int d) const { return values[index(ix, ir, d)]; }
  std::array<cplx, kChannels>& at(std::size_t ix, int ir, int d) { return values[index(ix, ir, d)]; }

  void allocate() {
    values.assign(x.size() * freq.radii.size() * freq.n_dirs, {});
  }
};

/// Centers expanded into the five-point x-stencils used for x-seminorms.
inline std::vector<Vec2> with_x_stencil(const std::vector<Vec2>& centers, double s) {
  std::vector<Vec2> out;
  for (const auto& c : centers) {
    out.push_back(c);
    out.push_back(c + Vec2(s, 0));
    out.push_back(c - Vec2(s, 0));
    out.push_back(c + Vec2(0, s));
    out.push_back(c - Vec2(0, s));
  }
  return out;
}

/// Samples an analytic symbol p(x, xi); xi-derivatives by central differences
/// with step 1e-3 (1 + |xi|).
template <class P>
SymbolGrid sample_symbol(const std::vector<Vec2>& xs, const FrequencyGrid& fg, P&& p, double order_m,
                         double x_step = 0.0) {
  SymbolGrid g;
  g.x = x_step > 0.0 ? with_x_stencil(xs, x_step) : xs;
  g.freq = fg;
  g.order_m = order_m;
  g.x_step = x_step;
  g.regularity_r = std::numeric_limits<double>::infinity();
  g.allocate();
  for (std::size_t ix = 0; ix < g.x.size(); ++ix)
    for (std::size_t ir = 0; ir < fg.radii.size(); ++ir)
      for (int d = 0; d < fg.n_dirs; ++d) {
        Vec2 xi = fg.xi(static_cast<int>(ir), d);
        double h = 1e-3 * (1.0 + xi.norm());
        auto P0 = [&](double a, double b) { return cplx(p(g.x[ix], Vec2(xi + Vec2(a, b)))); };
        cplx c = P0(0, 0);
        auto& v = g.at(ix, static_cast<int>(ir), d);
        v[0] = c;
        v[1] = (P0(h, 0) - P0(-h, 0)) / (2 * h);
        v[2] = (P0(0, h) - P0(0, -h)) / (2 * h);
        v[3] = (P0(h, 0) - 2.0 * c + P0(-h, 0)) / (h * h);
        v[4] = (P0(h, h) - P0(h, -h) - P0(-h, h) + P0(-h, -h)) / (4 * h * h);
        v[5] = (P0(0, h) - 2.0 * c + P0(0, -h)) / (h * h);
      }
  return g;
}

// ---------------------------------------------------------------------------
// Symbols from the z-lattice

struct SymbolOptions {
  int n_z = 1024;          // z-lattice points per axis
  int table_rho = 384;     // radial nodes of the polar geometric-factor table
  int table_omega = 96;    // angular nodes of that table
  int cell_rho = 8;        // polar sub-integration of the singular cell
  int cell_omega = 64;
  int alpha_max = 2;
  double x_step = 0.0;     // > 0 adds five-point x-stencils
  double alias_limit = 0.01;
  bool alias_check = true;
  unsigned workers = 0;
};

/// k(x, .) about a fixed center: the geometric factor G is tabulated in polar
/// coordinates, the cutoff and volume factors are evaluated exactly.
class PolarKernel {
 public:
  PolarKernel(const MetricField& m, const CutoffSpec& cut, const Vec2& x, int n_rho, int n_omega)
      : m_(&m), cut_(&cut), x_(x), n_rho_(n_rho), n_omega_(n_omega) {
    m.check_domain(x);
    if (n_rho < 4 || n_omega < 4) throw InputError("polar kernel table too small");
    reach_ = x.norm() + cut.phi.r_out;
    pref_ = 2.0 * cut.psi(x);
    d_rho_ = reach_ / (n_rho - 1);
    if (pref_ != 0.0) G_ = polar_geometric_factor(m, x, n_omega, n_rho, d_rho_, cut.phi.r_out);
  }

  /// k vanishes for |z| >= reach.
  double reach() const { return reach_; }
  bool zero() const { return pref_ == 0.0; }

  double G(double rho, double ang) const {
    double r = rho / d_rho_;
    int kr = std::min(static_cast<int>(r), n_rho_ - 2);
    double cr = r - kr;
    double w = ang / two_pi * n_omega_;
    w -= n_omega_ * std::floor(w / n_omega_);
    int t0 = static_cast<int>(w) % n_omega_;
    int t1 = (t0 + 1) % n_omega_;
    double ct = w - std::floor(w);
    const double* p0 = G_.data() + static_cast<std::size_t>(t0) * n_rho_ + kr;
    const double* p1 = G_.data() + static_cast<std::size_t>(t1) * n_rho_ + kr;
    return (1 - ct) * ((1 - cr) * p0[0] + cr * p0[1]) + ct * ((1 - cr) * p1[0] + cr * p1[1]);
  }

  double h(double rho, double ang) const {
    if (zero() || rho >= reach_) return 0.0;
    Vec2 y = x_ - rho * Vec2(std::cos(ang), std::sin(ang));
    double ph = cut_->phi(y);
    if (ph == 0.0) return 0.0;
    return pref_ * ph * m_->sqrt_det(y) * G(rho, ang);
  }
  double h0(double ang) const { return h(0.0, ang); }

  /// k(x, z), z != 0.
  double k(const Vec2& z) const {
    double r = z.norm();
    return h(r, std::atan2(z[1], z[0])) / r;
  }
  /// k - chi k_{-1} = chi r + (1 - chi) k, bounded at z = 0.
  double k_minus_leading(const Vec2& z) const {
    double r = z.norm();
    double a = std::atan2(z[1], z[0]);
    return (h(r, a) - cut_->chi.radial(r) * h0(a)) / r;
  }

  /// Integral of k (leading = false) or of k - chi k_{-1} (leading = true)
  /// over the square [-dz/2, dz/2]^2, in polar coordinates about 0.
  double center_cell(double dz, bool subtract_leading, int n_r, int n_w) const {
    double s = 0.0;
    for (int q = 0; q < n_w; ++q) {
      double ang = two_pi * (q + 0.5) / n_w;
      double R = 0.5 * dz / std::max(std::abs(std::cos(ang)), std::abs(std::sin(ang)));
      double h0v = subtract_leading ? h0(ang) : 0.0;
      double line = 0.0;
      for (int l = 0; l < n_r; ++l) {
        double rho = R * (l + 0.5) / n_r;
        line += h(rho, ang) - (subtract_leading ? cut_->chi.radial(rho) * h0v : 0.0);
      }
      s += line * R / n_r;
    }
    return s * two_pi / n_w;
  }

 private:
  const MetricField* m_;
  const CutoffSpec* cut_;
  Vec2 x_;
  int n_rho_, n_omega_;
  double reach_ = 0.0, pref_ = 0.0, d_rho_ = 1.0;
  std::vector<double> G_;
};

/// Samples of a compactly supported kernel on the lattice z = (i - n/2) dz.
struct ZLattice {
  int n = 0;
  double dz = 0.0;
  std::vector<double> values;  // index j * n + i; the z = 0 entry holds (cell integral) / dz^2

  double z(int i) const { return (i - n / 2) * dz; }
};

/// Lattice samples of f on |z| < reach with the z = 0 cell integral supplied separately.
template <class F>
ZLattice sample_lattice(F&& f, double center_integral, double reach, int n) {
  if (n < 8 || n % 2) throw InputError("z-lattice size must be even and >= 8");
  ZLattice L;
  L.n = n;
  L.dz = 2.0 * reach / n;
  L.values.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      Vec2 z(L.z(i), L.z(j));
      if (i == n / 2 && j == n / 2) continue;
      if (z.norm() >= reach) continue;
      L.values[static_cast<std::size_t>(j) * n + i] = f(z);
    }
  L.values[static_cast<std::size_t>(n / 2) * n + n / 2] = center_integral / (L.dz * L.dz);
  return L;
}

/// Fraction of the lattice spectrum's energy in the outermost 1/32 of each half-axis.
inline double lattice_alias_fraction(const ZLattice& L) {
  int n = L.n;
  std::vector<cplx> a(L.values.begin(), L.values.end());
  Fft2 fft(n, n);
  fft.forward(a);
  double total = 0.0, shell = 0.0;
  int edge = n / 2 - n / 64;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double e = std::norm(a[static_cast<std::size_t>(j) * n + i]);
      total += e;
      if (std::max(std::abs(fft_freq(i, n)), std::abs(fft_freq(j, n))) >= edge) shell += e;
    }
  return total > 0.0 ? shell / total : 0.0;
}

/// dz^2 sum_z e^{-i z.xi} (-i z)^alpha f(z) for every channel, evaluated by
/// separable direct summation at arbitrary xi.
inline std::array<cplx, kChannels> lattice_transform(const ZLattice& L, const Vec2& xi, int alpha_max) {
  int n = L.n;
  std::vector<double> c1(n), s1(n), zc(n), zs(n), z2c(n), z2s(n);
  for (int i = 0; i < n; ++i) {
    double z = L.z(i);
    c1[i] = std::cos(z * xi[0]);
    s1[i] = -std::sin(z * xi[0]);
    zc[i] = z * c1[i];
    zs[i] = z * s1[i];
    z2c[i] = z * zc[i];
    z2s[i] = z * zs[i];
  }
  std::array<cplx, kChannels> out{};
  for (int j = 0; j < n; ++j) {
    const double* row = L.values.data() + static_cast<std::size_t>(j) * n;
    int lo = 0, hi = n;
    while (lo < hi && row[lo] == 0.0) ++lo;
    while (hi > lo && row[hi - 1] == 0.0) --hi;
    if (lo == hi) continue;
    double r0 = 0, i0 = 0, r1 = 0, i1 = 0, r2 = 0, i2 = 0;
    for (int i = lo; i < hi; ++i) {
      r0 += row[i] * c1[i];
      i0 += row[i] * s1[i];
    }
    if (alpha_max >= 1)
      for (int i = lo; i < hi; ++i) {
        r1 += row[i] * zc[i];
        i1 += row[i] * zs[i];
      }
    if (alpha_max >= 2)
      for (int i = lo; i < hi; ++i) {
        r2 += row[i] * z2c[i];
        i2 += row[i] * z2s[i];
      }
    double zj = L.z(j);
    cplx e2 = std::polar(1.0, -zj * xi[1]);
    cplx S0(r0, i0), S1(r1, i1), S2(r2, i2);
    const cplx mi(0.0, -1.0);
    out[0] += S0 * e2;
    if (alpha_max >= 1) {
      out[1] += mi * S1 * e2;
      out[2] += mi * zj * S0 * e2;
    }
    if (alpha_max >= 2) {
      out[3] -= S2 * e2;
      out[4] -= zj * S1 * e2;
      out[5] -= zj * zj * S0 * e2;
    }
  }
  for (auto& v : out) v *= L.dz * L.dz;
  return out;
}

/// Fills one x-row of a symbol grid from a lattice; directions d and
/// d + n_dirs/2 are related by conjugate symmetry of a real kernel.
inline void fill_symbol_row(SymbolGrid& g, std::size_t ix, const ZLattice& L, unsigned workers) {
  const auto& fg = g.freq;
  int nd = fg.n_dirs;
  bool mirror = nd % 2 == 0;
  int nd_eval = mirror ? nd / 2 : nd;
  std::size_t nr = fg.radii.size();
  parallel_for(nr * nd_eval, workers, [&](std::size_t t) {
    int ir = static_cast<int>(t / nd_eval), d = static_cast<int>(t % nd_eval);
    auto v = lattice_transform(L, fg.xi(ir, d), g.alpha_max);
    g.at(ix, ir, d) = v;
    if (mirror) {
      auto& w = g.at(ix, ir, d + nd / 2);
      for (int c = 0; c < kChannels; ++c) w[c] = (alpha_order(c) % 2 ? -1.0 : 1.0) * std::conj(v[c]);
    }
  });
}

namespace detail {

enum class LatticeKernel { full, remainder };

inline SymbolGrid lattice_symbol(const MetricField& m, const CutoffSpec& cut, const std::vector<Vec2>& xs,
                                 const FrequencyGrid& fg, const SymbolOptions& opt, LatticeKernel which) {
  cut.validate();
  if (opt.alpha_max < 0 || opt.alpha_max > 2) throw InputError("alpha_max must be 0, 1 or 2");
  SymbolGrid g;
  g.x = opt.x_step > 0.0 ? with_x_stencil(xs, opt.x_step) : xs;
  g.freq = fg;
  g.alpha_max = opt.alpha_max;
  g.budget_L = opt.alpha_max;
  g.x_step = opt.x_step;
  g.order_m = which == LatticeKernel::full ? -1.0 : -2.0;
  g.regularity_r = m.regularity() == kSmooth ? std::numeric_limits<double>::infinity() : m.regularity() - 2.0;
  g.label = which == LatticeKernel::full ? "a" : "c";
  g.allocate();
  for (std::size_t ix = 0; ix < g.x.size(); ++ix) {
    PolarKernel pk(m, cut, g.x[ix], opt.table_rho, opt.table_omega);
    if (pk.zero()) continue;
    double dz = 2.0 * pk.reach() / opt.n_z;
    ZLattice L;
    if (which == LatticeKernel::full)
      L = sample_lattice([&](const Vec2& z) { return pk.k(z); },
                         pk.center_cell(dz, false, opt.cell_rho, opt.cell_omega), pk.reach(), opt.n_z);
    else
      L = sample_lattice([&](const Vec2& z) { return pk.k_minus_leading(z); },
                         pk.center_cell(dz, true, opt.cell_rho, opt.cell_omega), pk.reach(), opt.n_z);
    if (opt.alias_check) {
      double frac = lattice_alias_fraction(L);
      g.alias_fraction = std::max(g.alias_fraction, frac);
      if (frac > opt.alias_limit) g.alias_warning = true;
    }
    fill_symbol_row(g, ix, L, opt.workers);
  }
  return g;
}

}  // namespace detail

/// a(x, xi) = F_z k(x, .)(xi) and its xi-derivatives by 2D lattice transform;
/// the singular cell at z = 0 is integrated in polar coordinates.
inline SymbolGrid symbol_fft(const MetricField& m, const CutoffSpec& cut, const std::vector<Vec2>& xs,
                             const FrequencyGrid& fg, const SymbolOptions& opt = {}) {
  return detail::lattice_symbol(m, cut, xs, fg, opt, detail::LatticeKernel::full);
}

/// c = a - a_{-1} = F(k - chi k_{-1}) = F(chi r) + F((1 - chi) k); the
/// transformed function is bounded, so no singular cell correction is needed
/// beyond the polar cell integral.
inline SymbolGrid remainder_symbol(const MetricField& m, const CutoffSpec& cut, const std::vector<Vec2>& xs,
                                   const FrequencyGrid& fg, const SymbolOptions& opt = {}) {
  return detail::lattice_symbol(m, cut, xs, fg, opt, detail::LatticeKernel::remainder);
}

// ---------------------------------------------------------------------------
// Principal part via Hankel transforms

namespace detail {

/// I_n(s) = int (-chi'(t)) Q_n(t s) dt with Q_n(u) = 1 - int_0^u J_n.
/// Equals s int_0^inf (1 - chi(t)) J_n(t s) dt.
inline double chi_bessel_tail(const RadialCutoff& chi, int n, double s) {
  const auto& g16 = gauss16();
  const auto& g8 = gauss8();
  double a = chi.r_in, b = chi.r_out;
  int panels = std::max(4, static_cast<int>(std::ceil((b - a) * s)));
  double w = (b - a) / panels;
  auto Jn = [n](double u) { return std::cyl_bessel_j(static_cast<double>(n), u); };
  // int_0^{a s} J_n in unit panels.
  double u_prev = a * s;
  double acc = 0.0;
  int unit_panels = static_cast<int>(std::ceil(u_prev));
  for (int p = 0; p < unit_panels; ++p) {
    double u0 = u_prev * p / unit_panels, u1 = u_prev * (p + 1) / unit_panels;
    acc += gauss_integrate(g16, u0, u1, Jn);
  }
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    double t0 = a + p * w;
    for (std::size_t q = 0; q < g16.nodes.size(); ++q) {
      double t = t0 + 0.5 * w * (g16.nodes[q] + 1.0);
      double u = t * s;
      acc += gauss_integrate(g8, u_prev, u, Jn);
      u_prev = u;
      total += 0.5 * w * g16.weights[q] * (-chi.radial_deriv(t)) * (1.0 - acc);
    }
  }
  return total;
}

/// Even Fourier coefficients hat h_n, n = 0, 2, ..., of h(x, 0, .) from 64 samples.
inline std::vector<cplx> leading_harmonics(const MetricField& m, const CutoffSpec& cut, const Vec2& x,
                                           int n_max = 16) {
  constexpr int S = 64;
  std::vector<double> hv(S);
  for (int q = 0; q < S; ++q) {
    double ang = two_pi * q / S;
    hv[q] = h_line(m, cut, x, 0.0, Vec2(std::cos(ang), std::sin(ang)), {});
  }
  std::vector<cplx> c;
  for (int n = 0; n <= n_max; n += 2) {
    cplx s = 0.0;
    for (int q = 0; q < S; ++q) s += hv[q] * std::polar(1.0, -two_pi * n * q / S);
    c.push_back(s / static_cast<double>(S));
  }
  return c;
}

}  // namespace detail

/// b(x, xi) = F((1 - chi) k_{-1})(xi), from the angular harmonics of
/// h(x, 0, .) and one-dimensional Hankel transforms of 1 - chi.
inline double remainder_b(const MetricField& m, const CutoffSpec& cut, const Vec2& x, const Vec2& xi) {
  double s = xi.norm();
  if (s == 0.0) throw InputError("b is evaluated at xi != 0");
  auto hn = detail::leading_harmonics(m, cut, x);
  if (std::abs(hn[0]) == 0.0) return 0.0;
  double th = std::atan2(xi[1], xi[0]);
  double sum = hn[0].real() * detail::chi_bessel_tail(cut.chi, 0, s);
  for (std::size_t k = 1; k < hn.size(); ++k) {
    int n = 2 * static_cast<int>(k);
    if (std::abs(hn[k]) <= 1e-15 * std::abs(hn[0])) continue;
    cplx phase = std::pow(cplx(0.0, -1.0), n) * std::polar(1.0, n * th);
    sum += 2.0 * (hn[k] * phase).real() * detail::chi_bessel_tail(cut.chi, n, s);
  }
  return two_pi * sum / s;
}

/// a_{-1}(x, xi) = C psi(x) phi(x) / |xi|_{g(x)} - b(x, xi).
inline double principal_symbol(const MetricField& m, const CutoffSpec& cut, const Vec2& x, const Vec2& xi,
                               double C) {
  if (xi.squaredNorm() == 0.0) throw InputError("principal symbol is evaluated at xi != 0");
  double pp = cut.psi(x) * cut.phi(x);
  if (pp == 0.0) return 0.0;
  return C * pp / cotangent_norm(m.eval(x), xi) - remainder_b(m, cut, x, xi);
}

/// Fourier transform of 2 chi(|z|) / |z| at |xi| = s by the radial integral
/// 4 pi int_0^inf chi(rho) J_0(rho s) d rho.
inline double leading_transform_oracle(const RadialCutoff& chi, double s) {
  const auto& g16 = gauss16();
  int panels = std::max(8, static_cast<int>(std::ceil(chi.r_out * s)));
  double w = chi.r_out / panels, sum = 0.0;
  for (int p = 0; p < panels; ++p)
    sum += gauss_integrate(g16, p * w, (p + 1) * w, [&](double r) { return chi.radial(r) * std::cyl_bessel_j(0.0, r * s); });
  return 4.0 * pi * sum;
}

struct Calibration {
  double C = 0.0;
  double spread = 0.0;  // relative spread of |xi| F(2 chi/|z|) over the probe frequencies
  std::vector<double> probes;
  std::vector<double> values;
};

/// C = lim |xi| F(2 chi |z|^{-1})(xi), read off the radial oracle at large |xi|.
inline Calibration calibrate_constant(const RadialCutoff& chi, std::vector<double> probes = {400.0, 800.0, 1600.0}) {
  Calibration c;
  c.probes = probes;
  for (double s : probes) c.values.push_back(s * leading_transform_oracle(chi, s));
  auto [lo, hi] = std::minmax_element(c.values.begin(), c.values.end());
  c.C = c.values.back();
  c.spread = (*hi - *lo) / std::abs(c.C);
  if (!(c.spread < 1e-6)) throw Error("calibration has not settled at the probe frequencies");
  return c;
}

// ---------------------------------------------------------------------------
// Seminorm checks

struct SeminormRow {
  std::string kind;  // "xi": sup_x |d_xi^alpha p|; "x": sup_x |d_x d_xi^alpha p|
  int order = 0;     // |alpha|
  double exponent = 0.0;
  double constant = 0.0;
  double bound = 0.0;  // m - |alpha| + 0.25
  bool pass = false;
};

struct SeminormReport {
  double order_m = 0.0;
  std::vector<SeminormRow> rows;
  bool pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const SeminormRow& r) { return r.pass; });
  }
};

/// Fits sup over x, directions and |alpha| = j of |d^alpha p| against |xi|
/// (tail envelope) for each j <= alpha_max; with x-stencils also the first
/// x-difference quotients. Passes iff every exponent <= m - j + 0.25.
inline SeminormReport seminorm_check(const SymbolGrid& g, double m_claimed, int alpha_max) {
  const auto& R = g.freq.radii;
  if (R.size() < 4 || R.back() < 10.0 * R.front())
    throw InputError("seminorm fit needs at least 4 radii spanning a decade");
  if (alpha_max > g.alpha_max) throw InputError("symbol grid lacks the requested derivative channels");
  SeminormReport rep;
  rep.order_m = m_claimed;
  std::size_t nr = R.size();
  int nd = g.freq.n_dirs;
  auto fit_row = [&](const std::string& kind, int j, auto&& mag) {
    std::vector<double> sup(nr, 0.0);
    for (std::size_t ir = 0; ir < nr; ++ir)
      for (int d = 0; d < nd; ++d)
        for (int c = 0; c < kChannels; ++c)
          if (alpha_order(c) == j) sup[ir] = std::max(sup[ir], mag(static_cast<int>(ir), d, c));
    PowerFit f = fit_power_law(R, tail_envelope(sup));
    SeminormRow row{kind, j, f.exponent, f.constant, m_claimed - j + 0.25, false};
    row.pass = row.exponent <= row.bound;
    rep.rows.push_back(row);
  };
  for (int j = 0; j <= alpha_max; ++j) {
    fit_row("xi", j, [&](int ir, int d, int c) {
      double s = 0.0;
      for (std::size_t ix = 0; ix < g.x.size(); ++ix) s = std::max(s, std::abs(g.at(ix, ir, d)[c]));
      return s;
    });
  }
  if (g.x_step > 0.0) {
    if (g.x.size() % 5) throw InputError("x-stencil grid size must be a multiple of 5");
    for (int j = 0; j <= alpha_max; ++j) {
      fit_row("x", j, [&](int ir, int d, int c) {
        double s = 0.0;
        for (std::size_t b = 0; b < g.x.size(); b += 5)
          for (int e = 0; e < 2; ++e) {
            cplx dq = (g.at(b + 1 + 2 * e, ir, d)[c] - g.at(b + 2 + 2 * e, ir, d)[c]) / (2.0 * g.x_step);
            s = std::max(s, std::abs(dq));
          }
        return s;
      });
    }
  }
  return rep;
}

}  // namespace xrt
