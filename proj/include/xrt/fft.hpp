// Thin RAII wrapper over FFTW's 2D complex transforms.
#pragma once

#include "xrt/common.hpp"

#include <fftw3.h>

#include <mutex>

namespace xrt {

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// In-place 2D DFT of an n0 x n1 row-major complex array (index i0 * n1 + i1).
/// Forward is sum f e^{-2 pi i k.j / n}; inverse has the + sign; neither scales.
class Fft2 {
 public:
  Fft2(int n0, int n1) : n0_(n0), n1_(n1) {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    auto* buf = fftw_alloc_complex(static_cast<std::size_t>(n0) * n1);
    fwd_ = fftw_plan_dft_2d(n0, n1, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_2d(n0, n1, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_free(buf);
    if (!fwd_ || !inv_) throw Error("FFTW plan creation failed");
  }
  ~Fft2() {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
  }
  Fft2(const Fft2&) = delete;
  Fft2& operator=(const Fft2&) = delete;

  int n0() const { return n0_; }
  int n1() const { return n1_; }

  void forward(std::vector<cplx>& a) const { run(fwd_, a); }
  void inverse(std::vector<cplx>& a) const { run(inv_, a); }

 private:
  void run(fftw_plan p, std::vector<cplx>& a) const {
    if (a.size() != static_cast<std::size_t>(n0_) * n1_) throw InputError("FFT size mismatch");
    // New-array execution is thread safe; std::complex<double> is layout compatible with fftw_complex.
    // Plans were made for an aligned buffer, so the unaligned variant is requested via a copy when needed.
    auto* ptr = reinterpret_cast<fftw_complex*>(a.data());
    if (fftw_alignment_of(reinterpret_cast<double*>(ptr)) == 0) {
      fftw_execute_dft(p, ptr, ptr);
    } else {
      fftw_complex* buf = fftw_alloc_complex(a.size());
      std::copy(a.begin(), a.end(), reinterpret_cast<cplx*>(buf));
      fftw_execute_dft(p, buf, buf);
      std::copy(reinterpret_cast<cplx*>(buf), reinterpret_cast<cplx*>(buf) + a.size(), a.begin());
      fftw_free(buf);
    }
  }

  int n0_, n1_;
  fftw_plan fwd_ = nullptr, inv_ = nullptr;
};

/// Signed frequency index of FFT bin k out of n.
inline int fft_freq(int k, int n) { return k < (n + 1) / 2 ? k : k - n; }

}  // namespace xrt
