#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

namespace scatter_ra::fft {

namespace detail {

// FFTW planning is not thread-safe; execution on distinct plans is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> allocate(std::size_t n) {
  return FftwBuffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * (n == 0 ? 1 : n))));
}

}  // namespace detail

/// Real-to-complex / complex-to-real transform pair of a fixed length. Each
/// instance owns its buffers and plans, so one instance per thread.
class RealTransform {
 public:
  explicit RealTransform(std::size_t n)
      : n_(n), real_(detail::allocate<double>(n)), spectrum_(detail::allocate<fftw_complex>(n / 2 + 1)) {
    std::lock_guard lock(detail::planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_.get(), spectrum_.get(), FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spectrum_.get(), real_.get(), FFTW_ESTIMATE);
  }

  RealTransform(const RealTransform&) = delete;
  RealTransform& operator=(const RealTransform&) = delete;

  ~RealTransform() {
    std::lock_guard lock(detail::planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  [[nodiscard]] std::size_t bins() const noexcept { return n_ / 2 + 1; }

  std::span<double> real() noexcept { return {real_.get(), n_}; }
  std::span<std::complex<double>> spectrum() noexcept {
    return {reinterpret_cast<std::complex<double>*>(spectrum_.get()), bins()};
  }

  /// real() -> spectrum(); real() is clobbered.
  void forward() { fftw_execute(forward_); }

  /// spectrum() -> real(), scaled by 1/n so forward+inverse is the identity.
  /// spectrum() is clobbered.
  void inverse() {
    fftw_execute(inverse_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (double& v : real()) v *= scale;
  }

 private:
  std::size_t n_;
  detail::FftwBuffer<double> real_;
  detail::FftwBuffer<fftw_complex> spectrum_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace scatter_ra::fft
