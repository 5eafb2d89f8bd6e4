#pragma once

// Thin RAII layer over FFTW. Plans are made with FFTW_ESTIMATE so the chosen
// algorithm, and therefore every rounding, is identical from run to run.
// FFTW's planner is not thread-safe: create plans from one thread only.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

#include "specloss/error.hpp"
#include "specloss/grid.hpp"

namespace specloss {

namespace detail {

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};
struct FftwPlanFree {
  void operator()(fftw_plan p) const noexcept { fftw_destroy_plan(p); }
};

using FftwBuffer = std::unique_ptr<fftw_complex, FftwFree>;
using FftwPlan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, FftwPlanFree>;

inline FftwBuffer fftw_buffer(std::size_t n) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (p == nullptr) throw Error("fftw_malloc failed");
  return FftwBuffer(p);
}

}  // namespace detail

// In-place complex transform of fixed length, forward and inverse plans.
// The inverse is unnormalized (FFTW convention).
class Fft1d {
 public:
  explicit Fft1d(std::size_t n) : n_(n), buf_(detail::fftw_buffer(n)) {
    const int len = static_cast<int>(n);
    fwd_.reset(fftw_plan_dft_1d(len, buf_.get(), buf_.get(), FFTW_FORWARD, FFTW_ESTIMATE));
    inv_.reset(fftw_plan_dft_1d(len, buf_.get(), buf_.get(), FFTW_BACKWARD, FFTW_ESTIMATE));
  }

  std::size_t size() const noexcept { return n_; }

  std::span<std::complex<double>> data() noexcept {
    return {reinterpret_cast<std::complex<double>*>(buf_.get()), n_};
  }

  void forward() noexcept { fftw_execute(fwd_.get()); }
  void inverse() noexcept { fftw_execute(inv_.get()); }

 private:
  std::size_t n_;
  detail::FftwBuffer buf_;
  detail::FftwPlan fwd_;
  detail::FftwPlan inv_;
};

// |DFT|^2 of `in` zero-padded to pad_rows x pad_cols (placed at the origin).
// Index (ky, kx) holds frequency (ky/pad_rows, kx/pad_cols) in FFT order.
inline Grid<double> power_spectrum_2d(const Grid<double>& in, std::size_t pad_rows,
                                      std::size_t pad_cols) {
  if (pad_rows < in.rows() || pad_cols < in.cols()) {
    throw SizeError("power_spectrum_2d: padding smaller than input");
  }
  const std::size_t n = pad_rows * pad_cols;
  auto buf = detail::fftw_buffer(n);
  detail::FftwPlan plan(fftw_plan_dft_2d(static_cast<int>(pad_rows), static_cast<int>(pad_cols),
                                         buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE));
  auto* c = buf.get();
  for (std::size_t i = 0; i < n; ++i) c[i][0] = c[i][1] = 0.0;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    for (std::size_t k = 0; k < in.cols(); ++k) c[r * pad_cols + k][0] = in(r, k);
  }
  fftw_execute(plan.get());
  Grid<double> out(pad_rows, pad_cols);
  for (std::size_t i = 0; i < n; ++i) out[i] = c[i][0] * c[i][0] + c[i][1] * c[i][1];
  return out;
}

// Signed frequency (cycles/sample) of FFT index k on a length-n axis.
inline double fft_frequency(std::size_t k, std::size_t n) noexcept {
  const auto kk = static_cast<double>(k);
  const auto nn = static_cast<double>(n);
  return (2 * k < n) ? kk / nn : (kk - nn) / nn;
}

}  // namespace specloss
