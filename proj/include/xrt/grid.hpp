// Sampled functions: Cartesian scalar grids and fan-beam sinograms.
#pragma once

#include "xrt/common.hpp"

#include <cstdint>
#include <vector>

namespace xrt {

/// f sampled at cell centers of a uniform Cartesian grid.
///
/// Node (i, j) sits at origin + (i h, j h); values are stored row-major with
/// i fastest. Bilinear interpolation treats values beyond the node range as 0.
class ScalarGrid {
 public:
  ScalarGrid() = default;
  ScalarGrid(Vec2 origin, double h, int nx, int ny)
      : origin_(origin), h_(h), nx_(nx), ny_(ny), values_(static_cast<std::size_t>(nx) * ny, 0.0) {
    if (nx <= 0 || ny <= 0 || !(h > 0.0)) throw InputError("grid needs positive dims and spacing");
  }

  /// n x n cell-centered grid on the square [lo, hi]^2.
  static ScalarGrid square(int n, double lo = -1.0, double hi = 1.0) {
    double h = (hi - lo) / n;
    return ScalarGrid(Vec2(lo + 0.5 * h, lo + 0.5 * h), h, n, n);
  }

  template <class F>
  static ScalarGrid sample(int n, F&& f, double lo = -1.0, double hi = 1.0) {
    ScalarGrid g = square(n, lo, hi);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) g(i, j) = f(g.node(i, j));
    return g;
  }

  ScalarGrid zeros_like() const { return ScalarGrid(origin_, h_, nx_, ny_); }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t size() const { return values_.size(); }
  double spacing() const { return h_; }
  const Vec2& origin() const { return origin_; }
  Vec2 node(int i, int j) const { return origin_ + h_ * Vec2(i, j); }
  Vec2 node(std::size_t k) const { return node(static_cast<int>(k % nx_), static_cast<int>(k / nx_)); }

  double& operator()(int i, int j) { return values_[static_cast<std::size_t>(j) * nx_ + i]; }
  double operator()(int i, int j) const { return values_[static_cast<std::size_t>(j) * nx_ + i]; }
  double& operator[](std::size_t k) { return values_[k]; }
  double operator[](std::size_t k) const { return values_[k]; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_layout(const ScalarGrid& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && std::abs(h_ - o.h_) <= 1e-14 * h_ &&
           (origin_ - o.origin_).norm() <= 1e-12;
  }
  void require_same_layout(const ScalarGrid& o) const {
    if (!same_layout(o)) throw InputError("grid mismatch");
  }

  /// Bilinear interpolation; zero outside the node range.
  double bilinear(const Vec2& p) const {
    double u = (p[0] - origin_[0]) / h_;
    double v = (p[1] - origin_[1]) / h_;
    if (!(u > -1.0 && v > -1.0 && u < nx_ && v < ny_)) return 0.0;
    int i = static_cast<int>(std::floor(u));
    int j = static_cast<int>(std::floor(v));
    double a = u - i, b = v - j;
    auto at = [&](int ii, int jj) {
      return (ii < 0 || jj < 0 || ii >= nx_ || jj >= ny_) ? 0.0 : (*this)(ii, jj);
    };
    return (1 - a) * (1 - b) * at(i, j) + a * (1 - b) * at(i + 1, j) + (1 - a) * b * at(i, j + 1) +
           a * b * at(i + 1, j + 1);
  }

  /// Bilinear stencil: up to four (index, weight) pairs with nonzero weight.
  int stencil(const Vec2& p, std::size_t idx[4], double w[4]) const {
    double u = (p[0] - origin_[0]) / h_;
    double v = (p[1] - origin_[1]) / h_;
    if (!(u > -1.0 && v > -1.0 && u < nx_ && v < ny_)) return 0;
    int i = static_cast<int>(std::floor(u));
    int j = static_cast<int>(std::floor(v));
    double a = u - i, b = v - j;
    int n = 0;
    auto add = [&](int ii, int jj, double ww) {
      if (ii < 0 || jj < 0 || ii >= nx_ || jj >= ny_ || ww == 0.0) return;
      idx[n] = static_cast<std::size_t>(jj) * nx_ + ii;
      w[n++] = ww;
    };
    add(i, j, (1 - a) * (1 - b));
    add(i + 1, j, a * (1 - b));
    add(i, j + 1, (1 - a) * b);
    add(i + 1, j + 1, a * b);
    return n;
  }

  double dot(const ScalarGrid& o) const {
    require_same_layout(o);
    double s = 0.0;
    for (std::size_t k = 0; k < size(); ++k) s += values_[k] * o.values_[k];
    return s * h_ * h_;
  }
  double l2_norm() const { return std::sqrt(dot(*this)); }
  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Smallest radius about the origin containing every nonzero node, plus one cell diagonal.
  double support_radius() const {
    double r = 0.0;
    bool any = false;
    for (std::size_t k = 0; k < size(); ++k)
      if (values_[k] != 0.0) {
        r = std::max(r, node(k).norm());
        any = true;
      }
    return any ? r + h_ * std::sqrt(2.0) : 0.0;
  }

  ScalarGrid& operator+=(const ScalarGrid& o) {
    require_same_layout(o);
    for (std::size_t k = 0; k < size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  ScalarGrid& operator-=(const ScalarGrid& o) {
    require_same_layout(o);
    for (std::size_t k = 0; k < size(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  ScalarGrid& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  friend ScalarGrid operator+(ScalarGrid a, const ScalarGrid& b) { return a += b; }
  friend ScalarGrid operator-(ScalarGrid a, const ScalarGrid& b) { return a -= b; }
  friend ScalarGrid operator*(double s, ScalarGrid a) { return a *= s; }

  /// Pointwise product with a mask or weight grid.
  ScalarGrid times(const ScalarGrid& o) const {
    require_same_layout(o);
    ScalarGrid r = *this;
    for (std::size_t k = 0; k < size(); ++k) r.values_[k] *= o.values_[k];
    return r;
  }

 private:
  Vec2 origin_ = Vec2::Zero();
  double h_ = 1.0;
  int nx_ = 0, ny_ = 0;
  std::vector<double> values_;
};

/// Fan-beam sampling of inward boundary directions:
/// theta_i = 2 pi i / n_theta, alpha_j = -pi/2 + (j + 1/2) pi / n_alpha.
struct FanBeam {
  int n_theta = 180;
  int n_alpha = 90;

  double theta(int i) const { return two_pi * i / n_theta; }
  double alpha(int j) const { return -0.5 * pi + (j + 0.5) * pi / n_alpha; }
  double d_theta() const { return two_pi / n_theta; }
  double d_alpha() const { return pi / n_alpha; }
};

/// Values of a function on the fan-beam grid, index i * n_alpha + j.
class SinogramGrid {
 public:
  SinogramGrid() = default;
  explicit SinogramGrid(FanBeam fan)
      : fan_(fan), values_(static_cast<std::size_t>(fan.n_theta) * fan.n_alpha, 0.0) {
    if (fan.n_theta <= 0 || fan.n_alpha <= 0) throw InputError("fan-beam dims must be positive");
  }

  const FanBeam& fan() const { return fan_; }
  std::size_t size() const { return values_.size(); }
  double& operator()(int i, int j) { return values_[static_cast<std::size_t>(i) * fan_.n_alpha + j]; }
  double operator()(int i, int j) const { return values_[static_cast<std::size_t>(i) * fan_.n_alpha + j]; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// Bilinear interpolation, periodic in theta, clamped to the outer alpha nodes.
  double interpolate(double theta, double alpha) const {
    if (!(std::abs(alpha) <= 0.5 * pi + 1e-12))
      throw InputError("sinogram lookup outside the inward direction range");
    double u = theta / fan_.d_theta();
    u -= fan_.n_theta * std::floor(u / fan_.n_theta);
    int i0 = static_cast<int>(std::floor(u));
    double a = u - i0;
    i0 %= fan_.n_theta;
    int i1 = (i0 + 1) % fan_.n_theta;
    double v = (alpha + 0.5 * pi) / fan_.d_alpha() - 0.5;
    v = std::clamp(v, 0.0, static_cast<double>(fan_.n_alpha - 1));
    int j0 = std::min(static_cast<int>(std::floor(v)), fan_.n_alpha - 2 < 0 ? 0 : fan_.n_alpha - 2);
    int j1 = std::min(j0 + 1, fan_.n_alpha - 1);
    double b = v - j0;
    return (1 - a) * (1 - b) * (*this)(i0, j0) + a * (1 - b) * (*this)(i1, j0) +
           (1 - a) * b * (*this)(i0, j1) + a * b * (*this)(i1, j1);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  FanBeam fan_;
  std::vector<double> values_;
};

}  // namespace xrt
