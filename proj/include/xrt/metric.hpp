// Riemannian metrics on the closed unit disk and a small extension of it.
#pragma once

#include "xrt/common.hpp"

#include <array>
#include <limits>
#include <memory>
#include <string>

namespace xrt {

/// Metric tensor with first and second coordinate derivatives at one point.
/// dg[m](i,j) = d_m g_ij,  ddg[m][n](i,j) = d_m d_n g_ij.
struct MetricJet {
  Mat2 g;
  std::array<Mat2, 2> dg;
  std::array<std::array<Mat2, 2>, 2> ddg;
};

/// Geodesic acceleration a(x,v) = -Gamma(x)(v,v) and its linearization.
struct FlowJet {
  Vec2 acc;
  Mat2 dacc_dx;
  Mat2 dacc_dv;
};

/// Christoffel symbols of the second kind, gamma[i][j][k] = Gamma^i_jk.
struct Christoffel {
  double gamma[2][2][2];
};

/// A metric family. Implementations are immutable.
class MetricModel {
 public:
  virtual ~MetricModel() = default;

  virtual Mat2 g(const Vec2& x) const = 0;
  virtual MetricJet jet(const Vec2& x) const = 0;

  /// Conformal families (g = c Id) report c, grad c and hess c here and get
  /// a cheaper geodesic right-hand side.
  virtual bool conformal(const Vec2& /*x*/, double& /*c*/, Vec2& /*grad*/,
                         Mat2& /*hess*/) const {
    return false;
  }
  virtual bool is_conformal() const { return false; }
};

/// Regularity tag used for C^infinity families.
inline constexpr int kSmooth = std::numeric_limits<int>::max();

// ---------------------------------------------------------------------------
// Families

/// g = c(x) Id for a scalar conformal factor c.
class ConformalModel : public MetricModel {
 public:
  virtual void factor(const Vec2& x, double& c, Vec2& grad, Mat2& hess) const = 0;

  Mat2 g(const Vec2& x) const override {
    double c;
    Vec2 gr;
    Mat2 h;
    factor(x, c, gr, h);
    return c * Mat2::Identity();
  }

  MetricJet jet(const Vec2& x) const override {
    double c;
    Vec2 gr;
    Mat2 h;
    factor(x, c, gr, h);
    MetricJet j;
    j.g = c * Mat2::Identity();
    for (int m = 0; m < 2; ++m) {
      j.dg[m] = gr[m] * Mat2::Identity();
      for (int n = 0; n < 2; ++n) j.ddg[m][n] = h(m, n) * Mat2::Identity();
    }
    return j;
  }

  bool conformal(const Vec2& x, double& c, Vec2& grad, Mat2& hess) const override {
    factor(x, c, grad, hess);
    return true;
  }
  bool is_conformal() const override { return true; }
};

class EuclideanModel final : public ConformalModel {
 public:
  void factor(const Vec2&, double& c, Vec2& grad, Mat2& hess) const override {
    c = 1.0;
    grad.setZero();
    hess.setZero();
  }
};

/// c = 1 + eps exp(-|x|^2).
class GaussianConformalModel final : public ConformalModel {
 public:
  explicit GaussianConformalModel(double eps) : eps_(eps) {}
  void factor(const Vec2& x, double& c, Vec2& grad, Mat2& hess) const override {
    double e = eps_ * std::exp(-x.squaredNorm());
    c = 1.0 + e;
    grad = -2.0 * e * x;
    hess = e * (4.0 * x * x.transpose() - 2.0 * Mat2::Identity());
  }

 private:
  double eps_;
};

/// c = 4 / (1 + K|x|^2)^2, the constant curvature K model.
class ConstantCurvatureModel final : public ConformalModel {
 public:
  explicit ConstantCurvatureModel(double curvature) : K_(curvature) {}
  void factor(const Vec2& x, double& c, Vec2& grad, Mat2& hess) const override {
    double u = 1.0 + K_ * x.squaredNorm();
    double u2 = u * u;
    double u3 = u2 * u;
    c = 4.0 / u2;
    grad = -16.0 * K_ / u3 * x;
    hess = -16.0 * K_ / u3 * Mat2::Identity() +
           96.0 * K_ * K_ / (u3 * u) * x * x.transpose();
  }

 private:
  double K_;
};

/// c = 1 + eps max(0, 1 - |x - x0|^2)^(k + 1/2): exactly C^k, not C^(k+1).
class FiniteRegularityModel final : public ConformalModel {
 public:
  FiniteRegularityModel(int k, double eps, Vec2 x0) : k_(k), eps_(eps), x0_(x0) {}
  void factor(const Vec2& x, double& c, Vec2& grad, Mat2& hess) const override {
    Vec2 d = x - x0_;
    double s = 1.0 - d.squaredNorm();
    if (s <= 0.0) {
      c = 1.0;
      grad.setZero();
      hess.setZero();
      return;
    }
    double p = k_ + 0.5;
    double sp = std::pow(s, p - 1.0);  // s^(k-1/2)
    c = 1.0 + eps_ * sp * s;
    grad = -2.0 * eps_ * p * sp * d;
    double spp = std::pow(s, p - 2.0);  // s^(k-3/2), finite for k >= 2
    hess = eps_ * p * (4.0 * (p - 1.0) * spp * d * d.transpose() - 2.0 * sp * Mat2::Identity());
  }

 private:
  int k_;
  double eps_;
  Vec2 x0_;
};

// ---------------------------------------------------------------------------

/// A metric on the ball of radius 1 + delta_ext, immutable and cheap to copy.
class MetricField {
 public:
  MetricField(std::shared_ptr<const MetricModel> model, std::string name, int regularity,
              double delta_ext = 0.25)
      : model_(std::move(model)),
        name_(std::move(name)),
        regularity_(regularity),
        delta_ext_(delta_ext),
        conformal_(model_->is_conformal()) {
    if (delta_ext_ < 0.0) throw InputError("extension margin must be nonnegative");
    lambda_min_ = std::numeric_limits<double>::infinity();
    lambda_max_ = 0.0;
    double R = outer_radius();
    for (int ir = 0; ir <= 24; ++ir) {
      for (int ia = 0; ia < 48; ++ia) {
        double r = R * ir / 24.0;
        double a = two_pi * ia / 48.0;
        Eigen::SelfAdjointEigenSolver<Mat2> es(model_->g(Vec2(r * std::cos(a), r * std::sin(a))),
                                               Eigen::EigenvaluesOnly);
        lambda_min_ = std::min(lambda_min_, es.eigenvalues()[0]);
        lambda_max_ = std::max(lambda_max_, es.eigenvalues()[1]);
        if (ir == 0) break;
      }
    }
    if (!(lambda_min_ > 0.0)) throw InputError("metric is not positive definite on the extended ball");
  }

  const std::string& name() const { return name_; }
  int regularity() const { return regularity_; }
  double delta_ext() const { return delta_ext_; }
  double outer_radius() const { return 1.0 + delta_ext_; }
  double lambda_min() const { return lambda_min_; }
  double lambda_max() const { return lambda_max_; }
  bool is_conformal() const { return conformal_; }
  const MetricModel& model() const { return *model_; }

  /// Rough upper bound on the diameter of the unit disk in this metric.
  double diameter_estimate() const { return 2.0 * std::sqrt(lambda_max_); }

  /// Throws DomainError when |x| exceeds the extended radius plus `slack`.
  void check_domain(const Vec2& x, double slack = 0.0) const {
    if (x.squaredNorm() > sqr(outer_radius() + slack) * (1.0 + 1e-12))
      throw DomainError("metric evaluated outside the extended ball at |x| = " +
                        std::to_string(x.norm()));
  }

  Mat2 eval(const Vec2& x) const {
    check_domain(x);
    return model_->g(x);
  }

  /// d_m g_ij as dg[m](i,j).
  std::array<Mat2, 2> deriv(const Vec2& x) const {
    check_domain(x);
    return model_->jet(x).dg;
  }

  MetricJet jet(const Vec2& x) const {
    check_domain(x);
    return model_->jet(x);
  }

  double sqrt_det(const Vec2& x) const {
    check_domain(x);
    double c;
    Vec2 gr;
    Mat2 h;
    if (conformal_ && model_->conformal(x, c, gr, h)) return c;
    return std::sqrt(model_->g(x).determinant());
  }

  /// Conformal factor c when g = c Id; only valid when is_conformal().
  double conformal_factor(const Vec2& x) const {
    double c;
    Vec2 gr;
    Mat2 h;
    check_domain(x);
    model_->conformal(x, c, gr, h);
    return c;
  }

  Christoffel christoffel(const Vec2& x) const { return christoffel_from_jet(jet(x)); }

  static Christoffel christoffel_from_jet(const MetricJet& j) {
    Mat2 ginv = j.g.inverse();
    double low[2][2][2];
    for (int l = 0; l < 2; ++l)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          low[l][a][b] = 0.5 * (j.dg[a](l, b) + j.dg[b](l, a) - j.dg[l](a, b));
    Christoffel ch;
    for (int i = 0; i < 2; ++i)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          ch.gamma[i][a][b] = ginv(i, 0) * low[0][a][b] + ginv(i, 1) * low[1][a][b];
    return ch;
  }

  /// Geodesic acceleration -Gamma(x)(v,v).
  Vec2 acceleration(const Vec2& x, const Vec2& v, double slack = 0.0) const {
    check_domain(x, slack);
    double c;
    Vec2 gr;
    Mat2 h;
    if (conformal_ && model_->conformal(x, c, gr, h)) {
      double gv = gr.dot(v);
      return -(0.5 / c) * (2.0 * gv * v - v.squaredNorm() * gr);
    }
    Christoffel ch = christoffel_from_jet(model_->jet(x));
    Vec2 a;
    for (int i = 0; i < 2; ++i) {
      double s = 0.0;
      for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q) s += ch.gamma[i][p][q] * v[p] * v[q];
      a[i] = -s;
    }
    return a;
  }

  /// Acceleration together with its derivatives in x and v (Jacobi equation).
  FlowJet flow_jet(const Vec2& x, const Vec2& v, double slack = 0.0) const {
    check_domain(x, slack);
    FlowJet out;
    double c;
    Vec2 gr;
    Mat2 H;
    if (conformal_ && model_->conformal(x, c, gr, H)) {
      double gv = gr.dot(v);
      double vv = v.squaredNorm();
      Vec2 w = 2.0 * gv * v - vv * gr;
      out.acc = -(0.5 / c) * w;
      out.dacc_dv = -(1.0 / c) * (v * gr.transpose() + gv * Mat2::Identity() - gr * v.transpose());
      Vec2 Hv = H * v;
      out.dacc_dx = (0.5 / (c * c)) * w * gr.transpose() -
                    (0.5 / c) * (2.0 * v * Hv.transpose() - vv * H);
      return out;
    }
    MetricJet j = model_->jet(x);
    Mat2 ginv = j.g.inverse();
    Christoffel ch = christoffel_from_jet(j);
    double low[2][2][2];
    for (int l = 0; l < 2; ++l)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          low[l][a][b] = 0.5 * (j.dg[a](l, b) + j.dg[b](l, a) - j.dg[l](a, b));
    for (int i = 0; i < 2; ++i) {
      double s = 0.0;
      for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q) s += ch.gamma[i][p][q] * v[p] * v[q];
      out.acc[i] = -s;
      for (int k = 0; k < 2; ++k)
        out.dacc_dv(i, k) = -2.0 * (ch.gamma[i][0][k] * v[0] + ch.gamma[i][1][k] * v[1]);
    }
    for (int m = 0; m < 2; ++m) {
      Mat2 dginv = -ginv * j.dg[m] * ginv;
      for (int i = 0; i < 2; ++i) {
        double s = 0.0;
        for (int p = 0; p < 2; ++p)
          for (int q = 0; q < 2; ++q) {
            double dgam = 0.0;
            for (int l = 0; l < 2; ++l) {
              double dlow = 0.5 * (j.ddg[m][p](l, q) + j.ddg[m][q](l, p) - j.ddg[m][l](p, q));
              dgam += dginv(i, l) * low[l][p][q] + ginv(i, l) * dlow;
            }
            s += dgam * v[p] * v[q];
          }
        out.dacc_dx(i, m) = -s;
      }
    }
    return out;
  }

 private:
  std::shared_ptr<const MetricModel> model_;
  std::string name_;
  int regularity_;
  double delta_ext_;
  bool conformal_;
  double lambda_min_ = 0.0;
  double lambda_max_ = 0.0;
};

// ---------------------------------------------------------------------------
// Factories for the built-in families.

inline MetricField euclidean_metric(double delta_ext = 0.25) {
  return MetricField(std::make_shared<EuclideanModel>(), "euclidean", kSmooth, delta_ext);
}

inline MetricField gaussian_metric(double eps, double delta_ext = 0.25) {
  return MetricField(std::make_shared<GaussianConformalModel>(eps), "gaussian", kSmooth, delta_ext);
}

inline MetricField constant_curvature_metric(double K, double delta_ext = 0.25) {
  if (1.0 + K * sqr(1.0 + delta_ext) <= 0.0)
    throw InputError("constant curvature model is singular inside the extended ball");
  return MetricField(std::make_shared<ConstantCurvatureModel>(K), "curvature", kSmooth, delta_ext);
}

inline MetricField finite_regularity_metric(int k, double eps, Vec2 x0, double delta_ext = 0.25) {
  if (k < 2) throw InputError("finite-regularity family needs k >= 2");
  return MetricField(std::make_shared<FiniteRegularityModel>(k, eps, x0), "finite", k, delta_ext);
}

}  // namespace xrt
