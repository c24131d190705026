// Parametrix-preconditioned Richardson inversion of the normal operator, the
// sinogram route through backprojection, and an injectivity probe.
#pragma once

#include "xrt/common.hpp"
#include "xrt/cutoff.hpp"
#include "xrt/geodesic.hpp"
#include "xrt/grid.hpp"
#include "xrt/metric.hpp"
#include "xrt/parametrix.hpp"
#include "xrt/transform.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace xrt {

struct IterationTrace {
  std::vector<double> residual;               // ||d - N f_m|| / ||d||
  std::vector<double> error;                  // ||f_m - f_true|| / ||f_true||, when truth is known
  std::vector<double> t_probe;
  std::vector<std::vector<double>> sobolev;   // ||f_m||_{H^t} per iteration, per t
  std::size_t size() const { return residual.size(); }
};

enum class InversionStatus { converged, max_iter, diverged };

inline const char* to_string(InversionStatus s) {
  switch (s) {
    case InversionStatus::converged: return "converged";
    case InversionStatus::max_iter: return "max_iter";
    case InversionStatus::diverged: return "diverged";
  }
  return "?";
}

struct InversionOptions {
  int max_iter = 50;
  double tol = 1e-3;
  KernelQuadrature quad{};
  GeometryTableOptions table{};
  int padding = kParametrixPadding;
  std::vector<double> t_probe{0.0, 1.0};
  std::size_t dense_limit = 100'000'000;  // assemble N when rows x cols stays below this (800 MB)
  unsigned workers = 0;
};

struct InversionResult {
  ScalarGrid f;
  IterationTrace trace;
  InversionStatus status = InversionStatus::max_iter;
  int iterations = 0;
};

/// N restricted to inputs on the mask nodes, applied either through an
/// assembled dense matrix or by quadrature.
class MaskedNormal {
 public:
  MaskedNormal(const MetricField& m, const CutoffSpec& cut, const ScalarGrid& layout, const InversionOptions& opt)
      : layout_(layout.zeros_like()), workers_(opt.workers) {
    double r = cut.identity_radius();
    mask_ = layout_.zeros_like();
    for (std::size_t k = 0; k < layout_.size(); ++k)
      if (layout_.node(k).norm() <= r) {
        mask_[k] = 1.0;
        cols_.push_back(k);
      }
    GeometryTableOptions topt = opt.table;
    topt.workers = opt.workers;
    nk_ = std::make_shared<NormalKernel>(m, cut, layout_, std::min(r + 2.0 * layout_.spacing(), cut.phi.r_out),
                                         opt.quad, topt);
    if (nk_->rows().size() * cols_.size() <= opt.dense_limit) A_ = nk_->assemble(nk_->rows(), cols_, opt.workers);
  }

  const ScalarGrid& mask() const { return mask_; }
  const NormalKernel& kernel() const { return *nk_; }
  bool assembled() const { return A_.size() > 0; }

  ScalarGrid apply(const ScalarGrid& f) const {
    if (!assembled()) return nk_->apply(f.times(mask_), workers_);
    Eigen::VectorXd v(cols_.size());
    for (std::size_t c = 0; c < cols_.size(); ++c) v[c] = f[cols_[c]];
    Eigen::VectorXd w = A_ * v;
    ScalarGrid out = layout_.zeros_like();
    const auto& rows = nk_->rows();
    for (std::size_t r = 0; r < rows.size(); ++r) out[rows[r]] = w[r];
    return out;
  }

 private:
  ScalarGrid layout_;
  ScalarGrid mask_;
  std::vector<std::size_t> cols_;
  std::shared_ptr<NormalKernel> nk_;
  Eigen::MatrixXd A_;
  unsigned workers_;
};

/// Richardson iteration f_0 = M P d, f_{m+1} = M [f_m + P (d - N f_m)], with M
/// the indicator of the disk where psi = phi = 1. Stops when the relative
/// residual drops below tol, after max_iter steps, or when the residual has
/// grown three times in a row.
inline InversionResult invert_normal(const MetricField& m, double C, const CutoffSpec& cut, const ScalarGrid& d,
                                     const InversionOptions& opt = {},
                                     const std::optional<ScalarGrid>& truth = std::nullopt) {
  if (opt.max_iter < 0 || !(opt.tol >= 0.0)) throw InputError("inversion needs max_iter >= 0 and tol >= 0");
  if (truth) truth->require_same_layout(d);
  InversionResult res;
  res.trace.t_probe = opt.t_probe;
  res.f = d.zeros_like();
  double dn = d.l2_norm();
  auto record = [&](double r) {
    res.trace.residual.push_back(r);
    if (truth) {
      double tn = truth->l2_norm();
      res.trace.error.push_back(tn > 0.0 ? (res.f - *truth).l2_norm() / tn : res.f.l2_norm());
    }
    std::vector<double> s;
    for (double t : opt.t_probe) s.push_back(sobolev_norm(res.f, t));
    res.trace.sobolev.push_back(s);
  };
  if (dn == 0.0) {
    record(0.0);
    res.status = InversionStatus::converged;
    return res;
  }
  MaskedNormal N(m, cut, d, opt);
  PseudoOp P = parametrix(m, C, cut, d, opt.padding, ApplyMode::automatic, opt.workers);
  res.f = apply_op(P, d).times(N.mask());
  ScalarGrid r = d - N.apply(res.f);
  record(r.l2_norm() / dn);
  int growth = 0;
  for (int it = 0; it < opt.max_iter; ++it) {
    if (res.trace.residual.back() < opt.tol) {
      res.status = InversionStatus::converged;
      return res;
    }
    res.f += apply_op(P, r).times(N.mask());
    r = d - N.apply(res.f);
    double prev = res.trace.residual.back();
    record(r.l2_norm() / dn);
    res.iterations = it + 1;
    growth = res.trace.residual.back() > prev * (1.0 + 1e-12) ? growth + 1 : 0;
    if (growth >= 3) {
      res.status = InversionStatus::diverged;
      return res;
    }
  }
  res.status = res.trace.residual.back() < opt.tol ? InversionStatus::converged : InversionStatus::max_iter;
  return res;
}

struct SinogramInversionOptions {
  InversionOptions inversion{};
  BackprojectOptions backproject{};
};

/// Backprojects s (d = psi I* s, matching the cut-off normal operator on
/// inputs supported where phi = 1) and inverts the normal equation.
inline InversionResult invert_sinogram(const MetricField& m, double C, const CutoffSpec& cut, const SinogramGrid& s,
                                       const ScalarGrid& layout, const SinogramInversionOptions& opt = {},
                                       const std::optional<ScalarGrid>& truth = std::nullopt) {
  BackprojectOptions bo = opt.backproject;
  bo.workers = opt.inversion.workers;
  ScalarGrid d = backproject(m, s, layout, bo);
  for (std::size_t k = 0; k < d.size(); ++k) {
    Vec2 x = d.node(k);
    d[k] = x.norm() < 1.0 ? d[k] * cut.psi(x) : 0.0;
  }
  return invert_normal(m, C, cut, d, opt.inversion, truth);
}

// ---------------------------------------------------------------------------

struct InjectivityReport {
  int dims = 0;
  int unknowns = 0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double condition = 0.0;
  double symmetry_defect = 0.0;  // ||W A - (W A)^T|| / ||W A|| with W the volume weights
  bool pass = false;             // sigma_min > 10 eps sigma_max; a probe, not a proof
};

struct InjectivityOptions {
  KernelQuadrature quad{};
  SimplicityOptions simplicity{};
  unsigned workers = 0;
};

/// Singular values of the dense normal-operator matrix on the nodes of a
/// dims x dims grid with |x| <= 1 - 2h (psi = phi = 1 on the whole disk).
/// Refuses to run on non-simple metrics.
inline InjectivityReport injectivity_probe(const MetricField& m, int dims, const InjectivityOptions& opt = {}) {
  if (dims < 2) throw InputError("probe needs dims >= 2");
  if (dims > 48) throw InputError("probe is limited to 48^2 grids (dense SVD)");
  SimplicityReport sr = check_simplicity(m, opt.simplicity);
  if (!sr.simple()) throw DomainError("injectivity probe needs a simple metric");
  ScalarGrid g = ScalarGrid::square(dims);
  CutoffSpec cut = CutoffSpec::identity_on(1.0);
  // Every bilinear hat function of a probe node lies inside the unit disk.
  std::vector<std::size_t> nodes;
  double R = 1.0 - 2.0 * g.spacing();
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.node(k).norm() <= R) nodes.push_back(k);
  NormalKernel nk(m, cut, g, 1.0, opt.quad, GeometryTableOptions{.workers = opt.workers});
  Eigen::MatrixXd A = nk.assemble(nodes, nodes, opt.workers);
  // <N f, u> in L^2(dVol) is u^T W A f, so W A is symmetric.
  Eigen::VectorXd w(nodes.size());
  for (std::size_t c = 0; c < nodes.size(); ++c) w[c] = m.sqrt_det(g.node(nodes[c]));
  Eigen::MatrixXd S = w.asDiagonal() * A;
  InjectivityReport rep;
  rep.dims = dims;
  rep.unknowns = static_cast<int>(nodes.size());
  rep.symmetry_defect = (S - S.transpose()).norm() / S.norm();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& sv = svd.singularValues();
  rep.sigma_max = sv[0];
  rep.sigma_min = sv[sv.size() - 1];
  rep.condition = rep.sigma_min > 0.0 ? rep.sigma_max / rep.sigma_min : std::numeric_limits<double>::infinity();
  rep.pass = rep.sigma_min > 10.0 * std::numeric_limits<double>::epsilon() * rep.sigma_max;
  return rep;
}

// ---------------------------------------------------------------------------

struct RegularityGainReport {
  std::vector<double> t_probe;
  std::vector<double> f_norms;                   // ||f||_{H^t}
  std::vector<double> pd_norms;                  // ||P d||_{H^t}, d = N f
  std::vector<double> rf_norms;                  // ||R f||_{H^t} = ||f - P d||_{H^t}, the iterate-1 correction
  std::vector<std::vector<double>> iterates;     // ||f_m||_{H^t}, f_0 = M P d
  std::vector<std::vector<double>> corrections;  // ||f_{m+1} - f_m||_{H^t}
  std::vector<double> shift;                     // max_t |log(||f_{m+1}||_{H^t} / ||f_m||_{H^t})|
};

/// Sobolev profiles of f, P d and the Richardson iterates for d = N f. The
/// data d are integrated with exact values of f, so f - P d is the continuous
/// remainder -R f sampled on the grid rather than a bilinear artifact.
template <class Fn>
RegularityGainReport regularity_gain_demo(const MetricField& m, double C, const CutoffSpec& cut, Fn&& fn,
                                          const ScalarGrid& layout, int iterations,
                                          std::vector<double> t_probe = {0.0, 0.5, 1.0, 1.5},
                                          const InversionOptions& opt = {}) {
  if (iterations < 0) throw InputError("regularity demo needs iterations >= 0");
  RegularityGainReport rep;
  rep.t_probe = t_probe;
  auto profile = [&](const ScalarGrid& u) {
    std::vector<double> v;
    for (double t : t_probe) v.push_back(sobolev_norm(u, t));
    return v;
  };
  ResidualResult rr = residual_field(m, C, cut, fn, layout, {opt.quad, opt.table, opt.padding, opt.workers});
  ScalarGrid f = layout.zeros_like();
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = fn(f.node(k));
  MaskedNormal N(m, cut, layout, opt);
  PseudoOp P = parametrix(m, C, cut, layout, opt.padding, ApplyMode::automatic, opt.workers);
  rep.f_norms = profile(f);
  rep.pd_norms = profile(rr.PNf);
  rep.rf_norms = profile(rr.R);
  ScalarGrid u = rr.PNf.times(N.mask());
  rep.iterates.push_back(profile(u));
  for (int it = 0; it < iterations; ++it) {
    ScalarGrid du = apply_op(P, rr.Nf - N.apply(u)).times(N.mask());
    u += du;
    rep.iterates.push_back(profile(u));
    rep.corrections.push_back(profile(du));
  }
  for (std::size_t k = 1; k < rep.iterates.size(); ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t < t_probe.size(); ++t) {
      double a = rep.iterates[k - 1][t], b = rep.iterates[k][t];
      if (a > 0.0 && b > 0.0) s = std::max(s, std::abs(std::log(b / a)));
    }
    rep.shift.push_back(s);
  }
  return rep;
}

}  // namespace xrt
