// Gauss-Legendre rules and log-log power-law fits.
#pragma once

#include "xrt/common.hpp"

#include <limits>
#include <vector>

namespace xrt {

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule by Newton iteration on P_n.
inline GaussRule gauss_legendre(int n) {
  if (n < 1) throw InputError("Gauss-Legendre rule needs n >= 1");
  GaussRule r{std::vector<double>(n), std::vector<double>(n)};
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = x;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = r.weights[n - 1 - i] = w;
  }
  return r;
}

inline const GaussRule& gauss16() {
  static const GaussRule r = gauss_legendre(16);
  return r;
}

inline const GaussRule& gauss8() {
  static const GaussRule r = gauss_legendre(8);
  return r;
}

/// Integral of f over [a, b] with a Gauss rule.
template <class F>
double gauss_integrate(const GaussRule& rule, double a, double b, F&& f) {
  double c = 0.5 * (a + b), h = 0.5 * (b - a), s = 0.0;
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) s += rule.weights[q] * f(c + h * rule.nodes[q]);
  return s * h;
}

/// v ~ constant * s^exponent by least squares in log-log coordinates.
struct PowerFit {
  double exponent = 0.0;
  double constant = 0.0;  // smallest C with v <= C s^exponent on the data
  double r2 = 0.0;
  int points = 0;
};

/// Least-squares fit of log v against log s over the entries with v > 0.
/// All-zero data gives exponent -inf.
inline PowerFit fit_power_law(const std::vector<double>& s, const std::vector<double>& v) {
  if (s.size() != v.size()) throw InputError("fit needs equal-length data");
  std::vector<double> X, Y;
  for (std::size_t k = 0; k < s.size(); ++k)
    if (v[k] > 0.0 && s[k] > 0.0) {
      X.push_back(std::log(s[k]));
      Y.push_back(std::log(v[k]));
    }
  PowerFit f;
  f.points = static_cast<int>(X.size());
  if (X.empty()) {
    f.exponent = -std::numeric_limits<double>::infinity();
    f.r2 = 1.0;
    return f;
  }
  if (X.size() < 2) throw InputError("power-law fit needs at least two positive samples");
  double n = static_cast<double>(X.size()), mx = 0, my = 0;
  for (std::size_t k = 0; k < X.size(); ++k) mx += X[k], my += Y[k];
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t k = 0; k < X.size(); ++k) {
    sxx += sqr(X[k] - mx);
    sxy += (X[k] - mx) * (Y[k] - my);
    syy += sqr(Y[k] - my);
  }
  if (!(sxx > 0.0)) throw InputError("power-law fit needs distinct abscissae");
  f.exponent = sxy / sxx;
  f.r2 = syy > 0.0 ? sqr(sxy) / (sxx * syy) : 1.0;
  double c = 0.0;
  for (std::size_t k = 0; k < X.size(); ++k) c = std::max(c, Y[k] - f.exponent * X[k]);
  f.constant = std::exp(c);
  return f;
}

/// Running supremum from the right: e_k = max_{j >= k} v_j. Turns an
/// oscillating decay into the monotone envelope that a decay bound constrains.
inline std::vector<double> tail_envelope(std::vector<double> v) {
  for (std::size_t k = v.size(); k-- > 1;) v[k - 1] = std::max(v[k - 1], v[k]);
  return v;
}

}  // namespace xrt
