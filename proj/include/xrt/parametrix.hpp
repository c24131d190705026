// Leading-order parametrix P = Op(p), p = C^{-1} zeta(xi) |xi|_{g(x)}, pseudodifferential
// application on padded FFT lattices, the remainder R = PN - Id and Sobolev norms.
#pragma once

#include "xrt/common.hpp"
#include "xrt/cutoff.hpp"
#include "xrt/fft.hpp"
#include "xrt/fields.hpp"
#include "xrt/grid.hpp"
#include "xrt/metric.hpp"
#include "xrt/numerics.hpp"
#include "xrt/transform.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace xrt {

/// Zero-padding factor of the parametrix lattice; zeta is measured in its
/// frequency step 2 pi / (padded period).
inline constexpr int kParametrixPadding = 4;
/// Zero-padding factor of the Sobolev-norm surrogate and the packet lattice.
inline constexpr int kSobolevPadding = 2;

enum class ApplyMode { automatic, exact, fast };

/// Op(p) on a square grid, evaluated on the zero-padded FFT lattice.
///
/// A symbol is given either as a general p(x, xi) or in product form
/// amplitude(x) * multiplier(xi); the product form has the fast path (one
/// inverse FFT followed by a pointwise multiplication).
struct PseudoOp {
  ScalarGrid layout;
  int padding = 2;
  std::function<cplx(const Vec2&, const Vec2&)> symbol;
  std::function<cplx(const Vec2&)> multiplier;
  std::function<double(const Vec2&)> amplitude;
  /// Optional p(x, .) for a fixed x, used by the exact path to hoist x-work.
  std::function<std::function<cplx(const Vec2&)>(const Vec2&)> freeze;
  ApplyMode mode = ApplyMode::automatic;
  double output_radius = std::numeric_limits<double>::infinity();  // outputs beyond are 0
  unsigned workers = 0;

  int n() const { return layout.nx(); }
  int padded_n() const { return layout.nx() * padding; }
  /// Frequency spacing 2 pi / (padded period).
  double lattice_step() const { return two_pi / (padded_n() * layout.spacing()); }

  /// Frequency of FFT bin (k0, k1), with k0 along y and k1 along x.
  Vec2 xi(int k0, int k1) const {
    int N = padded_n();
    return lattice_step() * Vec2(fft_freq(k1, N), fft_freq(k0, N));
  }

  bool fast_available() const { return static_cast<bool>(multiplier); }

  cplx eval(const Vec2& x, const Vec2& k) const {
    if (symbol) return symbol(x, k);
    return (amplitude ? amplitude(x) : 1.0) * multiplier(k);
  }

  void validate() const {
    if (layout.size() == 0 || layout.nx() != layout.ny()) throw InputError("pseudo-op needs a square grid");
    if (padding < 1) throw InputError("padding must be >= 1");
    if (!symbol && !multiplier) throw InputError("pseudo-op has no symbol");
    if (mode == ApplyMode::fast && !multiplier) throw InputError("fast path needs a product-form symbol");
  }
};

inline PseudoOp identity_op(const ScalarGrid& layout, int padding = 2) {
  PseudoOp op;
  op.layout = layout.zeros_like();
  op.padding = padding;
  op.multiplier = [](const Vec2&) { return cplx(1.0, 0.0); };
  return op;
}

inline PseudoOp multiplier_op(const ScalarGrid& layout, std::function<cplx(const Vec2&)> q, int padding = 2) {
  PseudoOp op;
  op.layout = layout.zeros_like();
  op.padding = padding;
  op.multiplier = std::move(q);
  return op;
}

/// Applies op to complex grid values (row-major, x fastest).
inline std::vector<cplx> apply_op_complex(const PseudoOp& op, const std::vector<cplx>& f) {
  op.validate();
  if (f.size() != op.layout.size()) throw InputError("grid mismatch");
  const int n = op.n(), N = op.padded_n(), off = (N - n) / 2;
  const double inv = 1.0 / (static_cast<double>(N) * N);
  std::vector<cplx> F(static_cast<std::size_t>(N) * N, 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) F[static_cast<std::size_t>(j + off) * N + i + off] = f[static_cast<std::size_t>(j) * n + i];
  Fft2 fft(N, N);
  fft.forward(F);
  std::vector<cplx> out(op.layout.size(), 0.0);
  bool fast = op.mode == ApplyMode::fast || (op.mode == ApplyMode::automatic && op.fast_available());

  if (fast) {
    for (int k0 = 0; k0 < N; ++k0)
      for (int k1 = 0; k1 < N; ++k1) F[static_cast<std::size_t>(k0) * N + k1] *= op.multiplier(op.xi(k0, k1));
    fft.inverse(F);
    for (std::size_t k = 0; k < out.size(); ++k) {
      Vec2 x = op.layout.node(k);
      if (x.norm() >= op.output_radius) continue;
      int i = static_cast<int>(k % n), j = static_cast<int>(k / n);
      double a = op.amplitude ? op.amplitude(x) : 1.0;
      out[k] = a * F[static_cast<std::size_t>(j + off) * N + i + off] * inv;
    }
    return out;
  }

  double work = static_cast<double>(n) * n * N * N;
  if (work > 128.0 * 128.0 * 256.0 * 256.0) throw InputError("exact pseudo-op application limited to 128^2 grids");
  std::vector<cplx> roots(N);
  for (int k = 0; k < N; ++k) roots[k] = std::polar(1.0, two_pi * k / N);
  std::vector<Vec2> xis(static_cast<std::size_t>(N) * N);
  for (int k0 = 0; k0 < N; ++k0)
    for (int k1 = 0; k1 < N; ++k1) xis[static_cast<std::size_t>(k0) * N + k1] = op.xi(k0, k1);
  parallel_for(out.size(), op.workers, [&](std::size_t k) {
    Vec2 x = op.layout.node(k);
    if (x.norm() >= op.output_radius) return;
    int m1 = static_cast<int>(k % n) + off, m0 = static_cast<int>(k / n) + off;
    std::function<cplx(const Vec2&)> px =
        op.freeze ? op.freeze(x) : std::function<cplx(const Vec2&)>([&](const Vec2& q) { return op.eval(x, q); });
    cplx s = 0.0;
    for (int k0 = 0; k0 < N; ++k0) {
      cplx row = 0.0;
      const std::size_t base = static_cast<std::size_t>(k0) * N;
      for (int k1 = 0; k1 < N; ++k1)
        row += roots[(static_cast<long>(k1) * m1) % N] * px(xis[base + k1]) * F[base + k1];
      s += roots[(static_cast<long>(k0) * m0) % N] * row;
    }
    out[k] = s * inv;
  });
  return out;
}

/// Real part of Op(p) f.
inline ScalarGrid apply_op(const PseudoOp& op, const ScalarGrid& f) {
  f.require_same_layout(op.layout);
  std::vector<cplx> in(f.values().begin(), f.values().end());
  auto out = apply_op_complex(op, in);
  ScalarGrid r = f.zeros_like();
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = out[k].real();
  return r;
}

// ---------------------------------------------------------------------------

/// p(x, xi) = C^{-1} zeta(xi) |xi|_{g(x)}, zeta measured in units of `lattice_step`.
inline double parametrix_symbol(const MetricField& m, double C, const CutoffSpec& cut, double lattice_step,
                                const Vec2& x, const Vec2& xi) {
  if (!(C > 0.0)) throw InputError("calibrated constant must be positive");
  double z = cut.zeta(xi.norm(), lattice_step);
  if (z == 0.0) return 0.0;
  return z * cotangent_norm(m.eval(x), xi) / C;
}

/// P = Op(p) on `layout`, with outputs restricted to the unit ball. Conformal
/// metrics use the product form p = c(x)^{-1/2} * C^{-1} zeta(xi) |xi|.
inline PseudoOp parametrix(const MetricField& m, double C, const CutoffSpec& cut, const ScalarGrid& layout,
                           int padding = kParametrixPadding, ApplyMode mode = ApplyMode::automatic,
                           unsigned workers = 0) {
  if (!(C > 0.0)) throw InputError("calibrated constant must be positive");
  cut.validate();
  PseudoOp op;
  op.layout = layout.zeros_like();
  op.padding = padding;
  op.mode = mode;
  op.workers = workers;
  op.output_radius = 1.0;
  const double step = op.lattice_step();
  op.symbol = [m, C, cut, step](const Vec2& x, const Vec2& xi) {
    return cplx(parametrix_symbol(m, C, cut, step, x, xi), 0.0);
  };
  op.freeze = [m, C, cut, step](const Vec2& x) {
    Mat2 gi = m.eval(x).inverse();
    return std::function<cplx(const Vec2&)>([gi, C, cut, step](const Vec2& xi) {
      double z = cut.zeta(xi.norm(), step);
      return cplx(z == 0.0 ? 0.0 : z * std::sqrt(xi.dot(gi * xi)) / C, 0.0);
    });
  };
  if (m.is_conformal()) {
    op.multiplier = [C, cut, step](const Vec2& xi) { return cplx(cut.zeta(xi.norm(), step) * xi.norm() / C, 0.0); };
    op.amplitude = [m](const Vec2& x) { return 1.0 / std::sqrt(m.conformal_factor(x)); };
  }
  op.validate();
  return op;
}

// ---------------------------------------------------------------------------

/// Periodic H^t norm on the padded lattice:
/// ( (2 pi)^{-2} sum (1 + |xi|^2)^t |f^(xi)|^2 dxi^2 )^{1/2}, equal to the
/// discrete L^2 norm at t = 0.
inline double sobolev_norm(const ScalarGrid& f, double t, int padding = kSobolevPadding) {
  PseudoOp op = identity_op(f, padding);
  op.validate();
  const int n = op.n(), N = op.padded_n(), off = (N - n) / 2;
  std::vector<cplx> F(static_cast<std::size_t>(N) * N, 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) F[static_cast<std::size_t>(j + off) * N + i + off] = f(i, j);
  Fft2(N, N).forward(F);
  double s = 0.0;
  for (int k0 = 0; k0 < N; ++k0)
    for (int k1 = 0; k1 < N; ++k1)
      s += std::pow(1.0 + op.xi(k0, k1).squaredNorm(), t) * std::norm(F[static_cast<std::size_t>(k0) * N + k1]);
  double h = f.spacing();
  return std::sqrt(s * h * h / (static_cast<double>(N) * N));
}

/// Energy of f in dyadic lattice shells: shell 0 holds |k| < 1 (in lattice
/// units), shell b >= 1 holds 2^{b-1} <= |k| < 2^b. The shells partition the
/// lattice, so the energies sum to the squared L^2 norm.
inline std::vector<double> band_energies(const ScalarGrid& f, int padding = kSobolevPadding) {
  PseudoOp op = identity_op(f, padding);
  op.validate();
  const int n = op.n(), N = op.padded_n(), off = (N - n) / 2;
  std::vector<cplx> F(static_cast<std::size_t>(N) * N, 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) F[static_cast<std::size_t>(j + off) * N + i + off] = f(i, j);
  Fft2(N, N).forward(F);
  int n_bands = 2 + static_cast<int>(std::ceil(std::log2(N)));
  std::vector<double> e(n_bands, 0.0);
  double h = f.spacing(), scale = h * h / (static_cast<double>(N) * N);
  for (int k0 = 0; k0 < N; ++k0)
    for (int k1 = 0; k1 < N; ++k1) {
      double r = std::hypot(fft_freq(k0, N), fft_freq(k1, N));
      int b = r < 1.0 ? 0 : 1 + static_cast<int>(std::floor(std::log2(r)));
      e[b] += std::norm(F[static_cast<std::size_t>(k0) * N + k1]) * scale;
    }
  return e;
}

// ---------------------------------------------------------------------------

struct ResidualOptions {
  KernelQuadrature quad{};
  GeometryTableOptions table{};
  int padding = kParametrixPadding;
  unsigned workers = 0;
};

struct ResidualResult {
  ScalarGrid Nf, PNf, R;
  double ratio = 0.0;  // ||R f|| / ||f||, 0 for f = 0
};

namespace detail {

inline void require_identity_support(const CutoffSpec& cut, const ScalarGrid& f) {
  double r = cut.identity_radius();
  for (std::size_t k = 0; k < f.size(); ++k)
    if (f[k] != 0.0 && f.node(k).norm() > r)
      throw InputError("residual needs f supported where psi = phi = 1 (radius " + std::to_string(r) + ")");
}

inline ResidualResult finish_residual(const MetricField& m, double C, const CutoffSpec& cut, const ScalarGrid& f,
                                      ScalarGrid Nf, const ResidualOptions& opt) {
  ResidualResult res;
  res.Nf = std::move(Nf);
  res.PNf = apply_op(parametrix(m, C, cut, f, opt.padding, ApplyMode::automatic, opt.workers), res.Nf);
  res.R = res.PNf - f;
  double fn = f.l2_norm();
  res.ratio = fn > 0.0 ? res.R.l2_norm() / fn : 0.0;
  return res;
}

}  // namespace detail

/// PNf and Rf = PNf - f for grid-sampled f (N by kernel quadrature with bilinear input).
inline ResidualResult residual(const MetricField& m, double C, const CutoffSpec& cut, const ScalarGrid& f,
                               const ResidualOptions& opt = {}) {
  detail::require_identity_support(cut, f);
  double R = std::min(cut.identity_radius() + 2.0 * f.spacing(), cut.phi.r_out);
  GeometryTableOptions topt = opt.table;
  topt.workers = opt.workers;
  NormalKernel nk(m, cut, f, R, opt.quad, topt);
  return detail::finish_residual(m, C, cut, f, nk.apply(f, opt.workers), opt);
}

/// Same for f given pointwise: N f is integrated with exact values of f.
template <class Fn>
ResidualResult residual_field(const MetricField& m, double C, const CutoffSpec& cut, Fn&& fn,
                              const ScalarGrid& layout, const ResidualOptions& opt = {}) {
  ScalarGrid f = layout.zeros_like();
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = fn(f.node(k));
  detail::require_identity_support(cut, f);
  GeometryTableOptions topt = opt.table;
  topt.workers = opt.workers;
  NormalKernel nk(m, cut, layout, cut.identity_radius(), opt.quad, topt);
  ScalarGrid Nf = layout.zeros_like();
  const auto& rows = nk.rows();
  parallel_for(rows.size(), opt.workers, [&](std::size_t r) { Nf[rows[r]] = nk.at(layout.node(rows[r]), fn); });
  return detail::finish_residual(m, C, cut, f, std::move(Nf), opt);
}

// ---------------------------------------------------------------------------

/// Wave packet with radial window so that it vanishes outside `radius`.
struct WindowedPacket {
  WavePacket packet;
  RadialCutoff window;
  double operator()(const Vec2& x) const {
    double w = window(x);
    return w == 0.0 ? 0.0 : w * packet(x);
  }
};

/// Packet f_j: envelope sigma, harmonic of 2^j Sobolev-lattice units along x,
/// windowed to the disk where psi = phi = 1.
inline WindowedPacket wave_packet_level(int j, double lattice_step, const CutoffSpec& cut, double sigma = 0.15) {
  double r = cut.identity_radius();
  return WindowedPacket{WavePacket{Vec2(std::ldexp(1.0, j) * lattice_step, 0.0), sigma, Vec2::Zero()},
                        RadialCutoff{Vec2::Zero(), 0.75 * r, r}};
}

struct SmoothingOptions {
  int grid_n = 128;
  int j_lo = 3, j_hi = 6;
  double sigma = 0.15;
  double amplitude = 1.0;
  std::vector<double> t_probe{-1.0, 0.0, 1.0};
  KernelQuadrature quad{96, 512};
  GeometryTableOptions table{.cubic_x = true};
  int padding = kParametrixPadding;
  int sobolev_padding = kSobolevPadding;
  unsigned workers = 0;
};

struct SmoothingBand {
  int j = 0;
  double frequency = 0.0;  // |xi_0| of the packet
  double in_energy = 0.0;
  double residual_energy = 0.0;
  double ratio = 0.0;                // ||R f_j|| / ||f_j||
  std::vector<double> sobolev;       // ||R f_j||_{H^t} for t in t_probe
};

struct SmoothingReport {
  std::vector<SmoothingBand> bands;
  std::vector<double> t_probe;
  double tau = 0.0;  // fitted ratio ~ 2^{-j tau}
  double r2 = 0.0;
  bool pass() const { return tau > 0.0; }
};

inline SmoothingReport smoothing_order(const MetricField& m, double C, const CutoffSpec& cut,
                                       const SmoothingOptions& opt = {}) {
  if (opt.j_hi - opt.j_lo < 2) throw InputError("smoothing fit needs at least three packet levels");
  ScalarGrid layout = ScalarGrid::square(opt.grid_n);
  PseudoOp probe = identity_op(layout, opt.sobolev_padding);
  double step = probe.lattice_step();
  double nyquist = pi / layout.spacing();
  if (std::ldexp(1.0, opt.j_hi) * step + 4.0 / opt.sigma > nyquist)
    throw InputError("packet level j_hi exceeds the grid's frequency range");
  SmoothingReport rep;
  rep.t_probe = opt.t_probe;
  ResidualOptions ro{opt.quad, opt.table, opt.padding, opt.workers};
  std::vector<double> s, v;
  for (int j = opt.j_lo; j <= opt.j_hi; ++j) {
    WindowedPacket p = wave_packet_level(j, step, cut, opt.sigma);
    double a = opt.amplitude;
    auto fn = [&](const Vec2& x) { return a * p(x); };
    ResidualResult r = residual_field(m, C, cut, fn, layout, ro);
    ScalarGrid f = r.PNf - r.R;
    SmoothingBand b;
    b.j = j;
    b.frequency = p.packet.xi0.norm();
    b.in_energy = sqr(f.l2_norm());
    b.residual_energy = sqr(r.R.l2_norm());
    b.ratio = r.ratio;
    for (double t : opt.t_probe) b.sobolev.push_back(sobolev_norm(r.R, t, opt.sobolev_padding));
    rep.bands.push_back(b);
    s.push_back(std::ldexp(1.0, j));
    v.push_back(b.ratio);
  }
  PowerFit fit = fit_power_law(s, v);
  rep.tau = -fit.exponent;
  rep.r2 = fit.r2;
  return rep;
}

}  // namespace xrt
