// Geodesic tracing, exponential map and its inverse, Jacobi fields, and the
// simplicity certificate for metrics on the unit disk.
#pragma once

#include "xrt/metric.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace xrt {

struct PhaseState {
  Vec2 x;
  Vec2 v;
};

struct RayPath {
  std::vector<double> t;
  std::vector<PhaseState> states;
  double exit_time = 0.0;
  bool exited = false;

  const PhaseState& last() const { return states.back(); }
};

enum class ExitSphere { unit, extended };

struct TraceOptions {
  double h_step = 0.0;  // 0 selects default_step(m)
  ExitSphere sphere = ExitSphere::unit;
};

/// Default fixed RK4 step: diameter estimate / 2000.
inline double default_step(const MetricField& m) { return m.diameter_estimate() / 2000.0; }

/// Exit-time budget after which a ray is declared trapped.
inline double trapping_time(const MetricField& m) { return 100.0 * m.diameter_estimate(); }

inline PhaseState unit_speed(const MetricField& m, PhaseState s) {
  double n = tangent_norm(m.eval(s.x), s.v);
  if (!(n > 0.0)) throw InputError("initial velocity must be nonzero");
  s.v /= n;
  return s;
}

inline PhaseState rk4_step(const MetricField& m, const PhaseState& s, double h, double slack = 0.0) {
  Vec2 k1x = s.v;
  Vec2 k1v = m.acceleration(s.x, s.v, slack);
  Vec2 x2 = s.x + 0.5 * h * k1x, v2 = s.v + 0.5 * h * k1v;
  Vec2 k2v = m.acceleration(x2, v2, slack);
  Vec2 x3 = s.x + 0.5 * h * v2, v3 = s.v + 0.5 * h * k2v;
  Vec2 k3v = m.acceleration(x3, v3, slack);
  Vec2 x4 = s.x + h * v3, v4 = s.v + h * k3v;
  Vec2 k4v = m.acceleration(x4, v4, slack);
  return {s.x + (h / 6.0) * (k1x + 2.0 * v2 + 2.0 * v3 + v4),
          s.v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)};
}

namespace detail {

/// Illinois false position for a sign change of f on [a,b], f(a) < 0 <= f(b).
template <class F>
double bracket_root(F&& f, double a, double fa, double b, double fb, double tol) {
  int side = 0;
  for (int it = 0; it < 200 && b - a > tol; ++it) {
    double c = (a * fb - b * fa) / (fb - fa);
    if (!(c > a && c < b)) c = 0.5 * (a + b);
    double fc = f(c);
    if (fc < 0.0) {
      a = c;
      fa = fc;
      if (side == -1) fb *= 0.5;
      side = -1;
    } else {
      b = c;
      fb = fc;
      if (side == 1) fa *= 0.5;
      side = 1;
    }
  }
  return b;
}

}  // namespace detail

/// Marches a unit-speed geodesic with fixed RK4 steps until it crosses the
/// sphere |x| = R, calling visit(t, state) at t = 0, after every full step and
/// at the exit point. Returns (exit time, exited).
template <class Visit>
std::pair<double, bool> march_geodesic(const MetricField& m, PhaseState s, double h, double R,
                                       Visit&& visit) {
  if (!(h > 0.0)) throw InputError("step size must be positive");
  double slack = 4.0 * h / std::sqrt(m.lambda_min());
  auto F = [&](const Vec2& x) { return x.squaredNorm() - R * R; };
  const double root_tol = 1e-13;
  double t_max = trapping_time(m);
  double t = 0.0;
  visit(0.0, s);

  double f0 = F(s.x);
  if (f0 > 1e-9 * R * R) throw DomainError("geodesic starts outside the exit sphere");
  if (f0 >= -1e-12 * R * R) {
    // On the sphere: outward or tangent directions leave at once.
    if (s.x.dot(s.v) >= 0.0) return {0.0, true};
    PhaseState s1 = rk4_step(m, s, h, slack);
    if (F(s1.x) >= 0.0) {
      // Short chord: find an interior point inside the first step, then the exit.
      double lo = 0.5 * h;
      double flo = F(rk4_step(m, s, lo, slack).x);
      while (flo >= 0.0 && lo > 1e-15) {
        lo *= 0.5;
        flo = F(rk4_step(m, s, lo, slack).x);
      }
      if (flo >= 0.0) return {0.0, true};
      auto g = [&](double sig) { return F(rk4_step(m, s, sig, slack).x); };
      double tau = detail::bracket_root(g, lo, flo, h, F(s1.x), root_tol);
      visit(tau, rk4_step(m, s, tau, slack));
      return {tau, true};
    }
  }

  while (t < t_max) {
    PhaseState s1 = rk4_step(m, s, h, slack);
    double f1 = F(s1.x);
    if (f1 >= 0.0) {
      auto g = [&](double sig) { return F(rk4_step(m, s, sig, slack).x); };
      double sig = detail::bracket_root(g, 0.0, F(s.x), h, f1, root_tol);
      visit(t + sig, rk4_step(m, s, sig, slack));
      return {t + sig, true};
    }
    t += h;
    s = s1;
    visit(t, s);
  }
  return {t_max, false};
}

inline double exit_radius(const MetricField& m, ExitSphere sphere) {
  return sphere == ExitSphere::unit ? 1.0 : m.outer_radius();
}

/// Traces the unit-speed geodesic from s0 to the exit sphere.
inline RayPath trace_geodesic(const MetricField& m, const PhaseState& s0, double h_step = 0.0,
                              ExitSphere sphere = ExitSphere::unit) {
  if (s0.x.norm() > m.outer_radius()) throw DomainError("start point outside the extended ball");
  double h = h_step > 0.0 ? h_step : default_step(m);
  RayPath path;
  auto res = march_geodesic(m, unit_speed(m, s0), h, exit_radius(m, sphere),
                            [&](double t, const PhaseState& s) {
                              path.t.push_back(t);
                              path.states.push_back(s);
                            });
  // A root found at the very start of a step may coincide with the last node.
  if (path.t.size() >= 2 && path.t.back() <= path.t[path.t.size() - 2]) {
    path.t.erase(path.t.end() - 2);
    path.states.erase(path.states.end() - 2);
  }
  path.exit_time = res.first;
  path.exited = res.second;
  return path;
}

/// Exit time tau(x, v) of the unit-speed geodesic through (x, v).
inline double exit_time(const MetricField& m, const Vec2& x, const Vec2& v, double h_step = 0.0) {
  double h = h_step > 0.0 ? h_step : default_step(m);
  auto res = march_geodesic(m, unit_speed(m, {x, v}), h, 1.0, [](double, const PhaseState&) {});
  if (!res.second) throw TraceError("geodesic trapped: no exit before the timeout");
  return res.first;
}

/// Exit point and time of the unit-speed geodesic from (x, v).
inline std::pair<PhaseState, double> exit_state(const MetricField& m, const Vec2& x, const Vec2& v,
                                                double h_step = 0.0) {
  double h = h_step > 0.0 ? h_step : default_step(m);
  PhaseState last{x, v};
  auto res = march_geodesic(m, unit_speed(m, {x, v}), h, 1.0,
                            [&](double, const PhaseState& s) { last = s; });
  if (!res.second) throw TraceError("geodesic trapped: no exit before the timeout");
  return {last, res.first};
}

// ---------------------------------------------------------------------------
// Jacobi fields

/// Geodesic state together with the matrix Jacobi field J and its derivative.
struct JacobiState {
  Vec2 x, v;
  Mat2 J, dJ;
};

inline JacobiState jacobi_rk4_step(const MetricField& m, const JacobiState& s, double h,
                                   double slack = 0.0) {
  auto rhs = [&](const JacobiState& a) {
    FlowJet fj = m.flow_jet(a.x, a.v, slack);
    return JacobiState{a.v, fj.acc, a.dJ, fj.dacc_dx * a.J + fj.dacc_dv * a.dJ};
  };
  auto axpy = [](const JacobiState& a, double c, const JacobiState& d) {
    return JacobiState{a.x + c * d.x, a.v + c * d.v, a.J + c * d.J, a.dJ + c * d.dJ};
  };
  JacobiState k1 = rhs(s);
  JacobiState k2 = rhs(axpy(s, 0.5 * h, k1));
  JacobiState k3 = rhs(axpy(s, 0.5 * h, k2));
  JacobiState k4 = rhs(axpy(s, h, k3));
  return {s.x + (h / 6.0) * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
          s.v + (h / 6.0) * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
          s.J + (h / 6.0) * (k1.J + 2.0 * k2.J + 2.0 * k3.J + k4.J),
          s.dJ + (h / 6.0) * (k1.dJ + 2.0 * k2.dJ + 2.0 * k3.dJ + k4.dJ)};
}

/// Jacobi fields with J(0) = 0, J'(0) = Id along a traced unit-speed ray.
struct JacobiSolution {
  RayPath along;
  std::vector<Mat2> J;
};

inline JacobiSolution jacobi_along(const MetricField& m, const PhaseState& s0, double h_step = 0.0) {
  double h = h_step > 0.0 ? h_step : default_step(m);
  double slack = 4.0 * h / std::sqrt(m.lambda_min());
  JacobiSolution sol;
  PhaseState u = unit_speed(m, s0);
  JacobiState s{u.x, u.v, Mat2::Zero(), Mat2::Identity()};
  double t = 0.0;
  double t_max = trapping_time(m);
  auto push = [&](double tt, const JacobiState& st) {
    sol.along.t.push_back(tt);
    sol.along.states.push_back({st.x, st.v});
    sol.J.push_back(st.J);
  };
  push(0.0, s);
  bool on_sphere = s.x.squaredNorm() >= 1.0 - 1e-12;
  if (on_sphere && s.x.dot(s.v) >= 0.0) {
    sol.along.exited = true;
    return sol;
  }
  while (t < t_max) {
    JacobiState s1 = jacobi_rk4_step(m, s, h, slack);
    if (s1.x.squaredNorm() >= 1.0 && !(on_sphere && t == 0.0 && s1.x.dot(s1.v) < 0.0)) {
      auto g = [&](double sig) { return jacobi_rk4_step(m, s, sig, slack).x.squaredNorm() - 1.0; };
      double f0 = s.x.squaredNorm() - 1.0;
      double sig = f0 < 0.0 ? detail::bracket_root(g, 0.0, f0, h, s1.x.squaredNorm() - 1.0, 1e-13) : 0.0;
      if (sig > 0.0) push(t + sig, jacobi_rk4_step(m, s, sig, slack));
      sol.along.exit_time = t + sig;
      sol.along.exited = true;
      return sol;
    }
    t += h;
    s = s1;
    push(t, s);
  }
  sol.along.exit_time = t_max;
  sol.along.exited = false;
  return sol;
}

// ---------------------------------------------------------------------------
// Exponential map and its inverse

/// Integration step count used by exp_map when none is given: one RK4 step
/// per 0.01 of geodesic length, at least 8.
inline int exp_steps_for(double length) {
  return std::max(8, static_cast<int>(std::ceil(length / 0.01)));
}

/// Endpoint of the geodesic t -> exp_x(t w) at t = 1 and its differential in w.
struct ExpJet {
  Vec2 y;
  Vec2 v_end;  // velocity at t = 1 in the [0,1] parametrization
  Mat2 D;      // d exp_x at w
};

/// exp_x(w) with `n` fixed RK4 steps on the parameter interval [0, 1].
inline Vec2 exp_map(const MetricField& m, const Vec2& x, const Vec2& w, int n = 0) {
  if (w.squaredNorm() == 0.0) return x;
  if (n <= 0) n = exp_steps_for(tangent_norm(m.eval(x), w));
  PhaseState s{x, w};
  double h = 1.0 / n;
  for (int i = 0; i < n; ++i) s = rk4_step(m, s, h);
  return s.x;
}

/// exp_x(w) together with d exp_x at w, from Jacobi fields J(0) = 0, J'(0) = Id.
inline ExpJet exp_jet(const MetricField& m, const Vec2& x, const Vec2& w, int n = 0) {
  if (n <= 0) n = exp_steps_for(tangent_norm(m.eval(x), w));
  JacobiState s{x, w, Mat2::Zero(), Mat2::Identity()};
  double h = 1.0 / n;
  for (int i = 0; i < n; ++i) s = jacobi_rk4_step(m, s, h);
  return {s.x, s.v, s.J};
}

struct LogOptions {
  int n_steps = 0;                 // 0: chosen from the seed length
  double tol = 1e-11;              // position residual
  int max_iter = 50;
  std::optional<Vec2> seed;        // initial guess; Euclidean chord if empty
};

struct LogResult {
  Vec2 w;
  Mat2 D;  // d exp_x at w
  int iterations = 0;
  int n_steps = 0;
};

namespace detail {

inline LogResult shoot(const MetricField& m, const Vec2& x, const Vec2& y,
                              const LogOptions& opt = {}) {
  m.check_domain(x);
  m.check_domain(y);
  Vec2 w = opt.seed ? *opt.seed : Vec2(y - x);
  int n = opt.n_steps > 0 ? opt.n_steps : exp_steps_for(tangent_norm(m.eval(x), w));
  if ((y - x).squaredNorm() == 0.0) return {Vec2::Zero(), Mat2::Identity(), 0, n};
  ExpJet e = exp_jet(m, x, w, n);
  double res = (y - e.y).norm();
  for (int it = 0; it < opt.max_iter; ++it) {
    if (res <= opt.tol) return {w, e.D, it, n};
    double det = e.D.determinant();
    if (!(std::abs(det) > 1e-14)) throw ShootingError("singular differential of exp during shooting");
    Vec2 dw = e.D.inverse() * (y - e.y);
    double lam = 1.0;
    bool improved = false;
    for (int k = 0; k < 40; ++k) {
      Vec2 wn = w + lam * dw;
      ExpJet en;
      try {
        en = exp_jet(m, x, wn, n);
      } catch (const DomainError&) {
        lam *= 0.5;
        continue;
      }
      double rn = (y - en.y).norm();
      if (rn < res) {
        w = wn;
        e = en;
        res = rn;
        improved = true;
        break;
      }
      lam *= 0.5;
    }
    if (!improved) {
      if (res <= 100.0 * opt.tol) return {w, e.D, it, n};
      throw ShootingError("shooting stalled at residual " + std::to_string(res));
    }
  }
  if (res <= opt.tol) return {w, e.D, opt.max_iter, n};
  throw ShootingError("shooting did not converge, residual " + std::to_string(res));
}

}  // namespace detail

/// Inverse exponential map by damped Newton shooting, seeded with the chord.
/// When direct shooting fails the target is walked in from x along the chord
/// with each solution seeding the next.
inline LogResult log_map_full(const MetricField& m, const Vec2& x, const Vec2& y,
                              const LogOptions& opt = {}) {
  try {
    return detail::shoot(m, x, y, opt);
  } catch (const ShootingError&) {
    for (int pieces : {8, 32}) {
      try {
        LogOptions o = opt;
        o.seed.reset();
        if (o.n_steps <= 0)
          o.n_steps = exp_steps_for(tangent_norm(m.eval(x), Vec2(y - x)) * 1.5);
        LogResult r;
        for (int k = 1; k <= pieces; ++k) {
          Vec2 yk = x + (static_cast<double>(k) / pieces) * (y - x);
          if (k > 1) o.seed = r.w * (static_cast<double>(k) / (k - 1));
          r = detail::shoot(m, x, yk, o);
        }
        return r;
      } catch (const ShootingError&) {
      }
    }
    throw;
  }
}

inline Vec2 log_map(const MetricField& m, const Vec2& x, const Vec2& y, const LogOptions& opt = {}) {
  return log_map_full(m, x, y, opt).w;
}

inline double geo_distance(const MetricField& m, const Vec2& x, const Vec2& y,
                           const LogOptions& opt = {}) {
  if ((x - y).squaredNorm() == 0.0) return 0.0;
  return tangent_norm(m.eval(x), log_map(m, x, y, opt));
}

/// det of D measured in g-orthonormal frames at x and at y.
inline double metric_det(const MetricField& m, const Vec2& x, const Vec2& y, const Mat2& D) {
  return D.determinant() * std::sqrt(m.eval(y).determinant() / m.eval(x).determinant());
}

/// a(x, y) = 1 / det(d exp_x at exp_x^{-1}(y)).
inline double jacobian_factor(const MetricField& m, const Vec2& x, const Vec2& y,
                              const LogOptions& opt = {}) {
  if ((x - y).squaredNorm() == 0.0) return 1.0;
  LogResult r = log_map_full(m, x, y, opt);
  double d = metric_det(m, x, y, r.D);
  if (!(d > 0.0)) throw ConjugatePointError("exponential map singular between x and y");
  return 1.0 / d;
}

// ---------------------------------------------------------------------------
// Fan-beam boundary parametrization

/// Inward g-unit normal and g-unit tangent at the boundary point (cos t, sin t).
struct BoundaryFrame {
  Vec2 x, nu_in, tangent;
  double tangent_speed;  // |d/dtheta (cos, sin)|_g
};

inline BoundaryFrame boundary_frame(const MetricField& m, double theta) {
  Vec2 x(std::cos(theta), std::sin(theta));
  Vec2 cdot(-std::sin(theta), std::cos(theta));
  Mat2 g = m.eval(x);
  Vec2 conormal = g.inverse() * x;
  Vec2 nu = -conormal / tangent_norm(g, conormal);
  double sp = tangent_norm(g, cdot);
  return {x, nu, cdot / sp, sp};
}

/// Unit inward direction at boundary angle theta with angle alpha from the inner normal.
inline PhaseState fan_state(const MetricField& m, double theta, double alpha) {
  BoundaryFrame f = boundary_frame(m, theta);
  return {f.x, std::cos(alpha) * f.nu_in + std::sin(alpha) * f.tangent};
}

// ---------------------------------------------------------------------------
// Simplicity certificate

struct SimplicityOptions {
  int n_boundary = 128;  // convexity sample points
  int n_theta = 32;      // fan-beam rays for trapping and conjugate points
  int n_alpha = 16;
  double h_step = 0.0;
};

struct SimplicityReport {
  bool convex = true;
  bool non_trapping = true;
  bool no_conjugate_points = true;
  double min_curvature = 0.0;        // smallest boundary normal curvature
  double curvature_theta = 0.0;      // where it occurs
  double max_exit_time = 0.0;
  std::optional<std::pair<double, double>> trapped_ray;  // (theta, alpha)
  std::optional<std::pair<double, double>> conjugate_ray;
  double conjugate_time = 0.0;  // first zero of det J on the witness ray

  bool simple() const { return convex && non_trapping && no_conjugate_points; }
};

/// Normal curvature of the unit circle at angle theta, positive when convex.
inline double boundary_curvature(const MetricField& m, double theta) {
  Vec2 x(std::cos(theta), std::sin(theta));
  Vec2 cdot(-std::sin(theta), std::cos(theta));
  Mat2 g = m.eval(x);
  Vec2 cov = -x - m.acceleration(x, cdot);  // c'' + Gamma(c', c')
  return -cov.dot(x) / (tangent_norm(g, g.inverse() * x) * cdot.dot(g * cdot));
}

inline SimplicityReport check_simplicity(const MetricField& m, const SimplicityOptions& opt = {}) {
  SimplicityReport rep;
  rep.min_curvature = std::numeric_limits<double>::infinity();
  for (int i = 0; i < opt.n_boundary; ++i) {
    double th = two_pi * i / opt.n_boundary;
    double k = boundary_curvature(m, th);
    if (k < rep.min_curvature) {
      rep.min_curvature = k;
      rep.curvature_theta = th;
    }
  }
  rep.convex = rep.min_curvature > 0.0;

  for (int i = 0; i < opt.n_theta; ++i) {
    double th = two_pi * i / opt.n_theta;
    for (int j = 0; j < opt.n_alpha; ++j) {
      double al = -0.5 * pi + (j + 0.5) * pi / opt.n_alpha;
      JacobiSolution sol = jacobi_along(m, fan_state(m, th, al), opt.h_step);
      if (!sol.along.exited) {
        if (rep.non_trapping) rep.trapped_ray = std::make_pair(th, al);
        rep.non_trapping = false;
      } else {
        rep.max_exit_time = std::max(rep.max_exit_time, sol.along.exit_time);
      }
      for (std::size_t q = 1; q < sol.J.size(); ++q) {
        double d1 = sol.J[q].determinant();
        if (d1 <= 0.0) {
          double d0 = sol.J[q - 1].determinant();
          double t0 = sol.along.t[q - 1], t1 = sol.along.t[q];
          double tz = (q == 1 || d0 <= 0.0) ? t1 : t0 + (t1 - t0) * d0 / (d0 - d1);
          if (rep.no_conjugate_points || tz < rep.conjugate_time) {
            rep.conjugate_ray = std::make_pair(th, al);
            rep.conjugate_time = tz;
          }
          rep.no_conjugate_points = false;
          break;
        }
      }
    }
  }
  return rep;
}

}  // namespace xrt
