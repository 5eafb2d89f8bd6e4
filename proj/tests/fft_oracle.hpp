#pragma once

// Independent reference for separable FIR filtering: multiply by the taps'
// frequency response on a periodic grid. Away from the borders (by at least
// half the filter length) this equals any boundary-extended convolution.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "specloss/fft.hpp"
#include "specloss/grid.hpp"

namespace oracle {

// Response of centered taps h[j], j = -half..half, at f cycles/sample.
inline std::complex<double> response(const std::vector<double>& taps, double f) {
  const long half = static_cast<long>(taps.size() / 2);
  std::complex<double> acc{0.0, 0.0};
  for (long j = -half; j <= half; ++j) {
    acc += taps[static_cast<std::size_t>(j + half)] *
           std::polar(1.0, -2.0 * std::numbers::pi * f * static_cast<double>(j));
  }
  return acc;
}

inline void filter_lines(specloss::Grid<double>& g, const std::vector<double>& taps, bool along_rows) {
  const std::size_t lines = along_rows ? g.rows() : g.cols();
  const std::size_t n = along_rows ? g.cols() : g.rows();
  specloss::Fft1d fft(n);
  std::vector<std::complex<double>> h(n);
  for (std::size_t k = 0; k < n; ++k) h[k] = response(taps, specloss::fft_frequency(k, n));
  auto at = [&](std::size_t line, std::size_t i) -> double& {
    return along_rows ? g(line, i) : g(i, line);
  };
  for (std::size_t line = 0; line < lines; ++line) {
    auto d = fft.data();
    for (std::size_t i = 0; i < n; ++i) d[i] = at(line, i);
    fft.forward();
    for (std::size_t k = 0; k < n; ++k) d[k] *= h[k];
    fft.inverse();
    for (std::size_t i = 0; i < n; ++i) at(line, i) = d[i].real() / static_cast<double>(n);
  }
}

// Both axes.
inline specloss::Grid<double> periodic_filter(specloss::Grid<double> g, const std::vector<double>& taps) {
  filter_lines(g, taps, true);
  filter_lines(g, taps, false);
  return g;
}

}  // namespace oracle
