// Test functions used by the experiments: Gaussians, disk indicators,
// random band-limited fields and wave packets.
#pragma once

#include "xrt/cutoff.hpp"
#include "xrt/grid.hpp"

#include <random>

namespace xrt {

/// exp(-|x - c|^2 / (2 sigma^2)).
struct GaussianField {
  double sigma = 0.15;
  Vec2 center = Vec2::Zero();
  double operator()(const Vec2& x) const {
    return std::exp(-(x - center).squaredNorm() / (2.0 * sigma * sigma));
  }
  /// Line integral along the full line at distance rho from the center.
  double line_integral(double rho) const {
    return sigma * std::sqrt(two_pi) * std::exp(-rho * rho / (2.0 * sigma * sigma));
  }
};

struct DiskIndicator {
  double radius = 0.5;
  Vec2 center = Vec2::Zero();
  double operator()(const Vec2& x) const { return (x - center).norm() < radius ? 1.0 : 0.0; }
};

/// Windowed sum of random plane waves with frequencies |k| <= k_max, times a
/// smooth radial window that vanishes beyond `support`.
class RandomSmoothField {
 public:
  RandomSmoothField(std::uint64_t seed, int n_waves = 12, double k_max = 8.0, double support = 0.6)
      : window_{Vec2::Zero(), 0.5 * support, support} {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0), ang(0.0, two_pi);
    for (int q = 0; q < n_waves; ++q) {
      double kr = k_max * std::sqrt(0.5 * (u(rng) + 1.0));
      double a = ang(rng);
      waves_.push_back({Vec2(kr * std::cos(a), kr * std::sin(a)), ang(rng), u(rng)});
    }
    offset_ = u(rng);
  }

  double operator()(const Vec2& x) const {
    double w = window_(x);
    if (w == 0.0) return 0.0;
    double s = offset_;
    for (const auto& wv : waves_) s += wv.amp * std::cos(wv.k.dot(x) + wv.phase);
    return w * s;
  }

 private:
  struct Wave {
    Vec2 k;
    double phase;
    double amp;
  };
  RadialCutoff window_;
  std::vector<Wave> waves_;
  double offset_;
};

/// Gaussian envelope times a plane wave of frequency |xi0|: localized in both
/// space and frequency.
struct WavePacket {
  Vec2 xi0;
  double sigma = 0.15;
  Vec2 center = Vec2::Zero();
  double operator()(const Vec2& x) const {
    Vec2 d = x - center;
    return std::exp(-d.squaredNorm() / (2.0 * sigma * sigma)) * std::cos(xi0.dot(d));
  }
};

}  // namespace xrt
