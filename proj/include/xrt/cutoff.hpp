// Polynomial smoothstep cutoffs psi, phi, chi, zeta.
#pragma once

#include "xrt/common.hpp"

namespace xrt {

/// Smoothstep of order 7: S(0) = 0, S(1) = 1, first 7 derivatives vanish at both ends.
/// S(t) = t^8 sum_{k=0}^{7} C(7+k, k) (1-t)^k.
inline double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  static constexpr double binom[8] = {1, 8, 36, 120, 330, 792, 1716, 3432};
  double s = 0.0, p = 1.0, u = 1.0 - t;
  for (int k = 0; k < 8; ++k) {
    s += binom[k] * p;
    p *= u;
  }
  double t2 = t * t, t4 = t2 * t2;
  return t4 * t4 * s;
}

/// S'(t) = (15! / (7!)^2) t^7 (1-t)^7.
inline double smoothstep_deriv(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  double q = t * (1.0 - t);
  double q2 = q * q;
  return 51480.0 * q2 * q2 * q2 * q;
}

/// Radial cutoff: 1 for |x - center| <= r_in, 0 for |x - center| >= r_out.
struct RadialCutoff {
  Vec2 center = Vec2::Zero();
  double r_in = 0.0;
  double r_out = 1.0;

  double radial(double r) const { return smoothstep((r_out - r) / (r_out - r_in)); }
  double radial_deriv(double r) const {
    return -smoothstep_deriv((r_out - r) / (r_out - r_in)) / (r_out - r_in);
  }
  double operator()(const Vec2& x) const { return radial((x - center).norm()); }

  void validate(const char* name) const {
    if (!(r_in >= 0.0 && r_in < r_out))
      throw InputError(std::string("cutoff ") + name + " needs 0 <= r_in < r_out");
  }
};

/// The four cutoffs used by the kernel and parametrix constructions.
///
/// psi and phi act in x-space, chi in z = x - y, zeta in frequency; zeta is
/// specified in units of the parametrix lattice spacing 2 pi / L and equals
/// 1 - (radial cutoff) so that it vanishes near the origin.
struct CutoffSpec {
  RadialCutoff psi{Vec2::Zero(), 0.75, 0.9};
  RadialCutoff phi{Vec2::Zero(), 0.75, 0.95};
  RadialCutoff chi{Vec2::Zero(), 0.25, 0.5};
  double zeta_in = 2.0;   // zeta = 0 for |xi| <= zeta_in * 2 pi / L
  double zeta_out = 4.0;  // zeta = 1 for |xi| >= zeta_out * 2 pi / L

  /// Radius of the disk where psi = phi = 1.
  double identity_radius() const { return std::min(psi.r_in, phi.r_in); }

  double zeta(double xi_norm, double lattice_step) const {
    return 1.0 - smoothstep((zeta_out - xi_norm / lattice_step) / (zeta_out - zeta_in));
  }

  void validate() const {
    psi.validate("psi");
    phi.validate("phi");
    chi.validate("chi");
    if (!(zeta_in >= 0.0 && zeta_in < zeta_out)) throw InputError("cutoff zeta needs 0 <= r_in < r_out");
  }

  /// psi = phi = 1 on the whole disk of radius r_all and a bit beyond.
  static CutoffSpec identity_on(double r_all) {
    CutoffSpec c;
    c.psi = {Vec2::Zero(), r_all, r_all + 0.1};
    c.phi = {Vec2::Zero(), r_all, r_all + 0.1};
    return c;
  }
};

}  // namespace xrt
