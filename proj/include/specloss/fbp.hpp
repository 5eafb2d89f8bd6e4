#pragma once

// Log inversion of counts and parallel-beam filtered backprojection.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "specloss/error.hpp"
#include "specloss/fft.hpp"
#include "specloss/grid.hpp"
#include "specloss/phantom.hpp"

namespace specloss {

enum class Apodization { none, hann };

inline Apodization apodization_from_string(const std::string& s) {
  if (s == "none") return Apodization::none;
  if (s == "hann") return Apodization::hann;
  throw ValidationError("unknown apodization '" + s + "' (expected none|hann)");
}

inline const char* to_string(Apodization a) { return a == Apodization::hann ? "hann" : "none"; }

struct ReconConfig {
  std::size_t grid_size = 256;
  double pixel_pitch_mm = 1.0;
  Apodization apodization = Apodization::none;
  double i0 = 1e4;
  double floor = 0.5;
};

inline void validate(const ReconConfig& c) {
  if (c.grid_size < 16) throw ValidationError("recon grid_size must be >= 16");
  if (!(c.pixel_pitch_mm > 0.0)) throw ValidationError("recon pixel_pitch_mm must be > 0");
  if (!(c.i0 > 0.0)) throw ValidationError("recon i0 must be > 0");
  if (!(c.floor > 0.0)) throw ValidationError("recon floor must be > 0");
}

// p = -ln(max(counts, floor) / i0)
inline Sinogram counts_to_line_integrals(const Sinogram& sino, double i0, double floor) {
  if (sino.domain != SinogramDomain::counts) {
    throw UsageError("counts_to_line_integrals: expected a counts sinogram");
  }
  if (!(i0 > 0.0) || !(floor > 0.0)) throw ValidationError("i0 and floor must be > 0");
  Sinogram out = sino;
  out.domain = SinogramDomain::line_integral;
  for (auto& v : out.values.values()) v = -std::log(std::max(v, floor) / i0);
  return out;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

// Frequency response of the band-limited discrete ramp (spatial kernel
// h(0) = 1/(4 tau^2), h(odd k) = -1/(pi k tau)^2, h(even) = 0), optionally
// multiplied by a Hann window reaching zero at the Nyquist frequency.
inline std::vector<double> ramp_response(std::size_t padded, double tau, Apodization apod) {
  Fft1d fft(padded);
  auto buf = fft.data();
  for (auto& c : buf) c = 0.0;
  const long half = static_cast<long>(padded / 2);
  for (long k = -half + 1; k < half; ++k) {
    double h = 0.0;
    if (k == 0) h = 1.0 / (4.0 * tau * tau);
    else if (k % 2 != 0) {
      const double d = std::numbers::pi * static_cast<double>(k) * tau;
      h = -1.0 / (d * d);
    }
    const auto idx = static_cast<std::size_t>(k < 0 ? k + static_cast<long>(padded) : k);
    buf[idx] = h;
  }
  fft.forward();
  std::vector<double> resp(padded);
  for (std::size_t i = 0; i < padded; ++i) {
    double r = buf[i].real();
    if (apod == Apodization::hann) {
      const double f = std::abs(fft_frequency(i, padded));  // cycles/sample, <= 0.5
      r *= 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * f));
    }
    resp[i] = r;
  }
  return resp;
}

}  // namespace detail

// Ramp-filters every view in the frequency domain (zero-padded to twice the
// next power of two) and backprojects pixel-driven with linear interpolation
// between channels.
inline ImageGrid fbp(const Sinogram& sino, const ReconConfig& cfg) {
  validate(cfg);
  if (sino.domain != SinogramDomain::line_integral) {
    throw UsageError("fbp: expected a line-integral sinogram");
  }
  const std::size_t n_views = sino.n_views();
  const std::size_t n_ch = sino.n_channels();
  if (n_views == 0 || n_ch == 0) throw ValidationError("fbp: empty sinogram");
  if (sino.view_angles.size() != n_views) throw ValidationError("fbp: angle count mismatch");
  const auto expected = uniform_view_angles(n_views);
  for (std::size_t v = 0; v < n_views; ++v) {
    if (std::abs(sino.view_angles[v] - expected[v]) > 1e-9) {
      throw ValidationError("fbp: view angles must be uniform over [0, pi)");
    }
  }
  if (!all_finite(sino.values)) throw DataError("fbp: non-finite sinogram values");

  const double tau = sino.channel_pitch_mm;
  const std::size_t padded = 2 * next_pow2(n_ch);
  const auto resp = detail::ramp_response(padded, tau, cfg.apodization);

  Grid<double> filtered(n_views, n_ch);
  Fft1d fft(padded);
  auto buf = fft.data();
  // tau from the convolution sum, 1/padded from the unnormalized inverse.
  const double scale = tau / static_cast<double>(padded);
  for (std::size_t v = 0; v < n_views; ++v) {
    for (std::size_t i = 0; i < padded; ++i) buf[i] = i < n_ch ? sino.values(v, i) : 0.0;
    fft.forward();
    for (std::size_t i = 0; i < padded; ++i) buf[i] *= resp[i];
    fft.inverse();
    for (std::size_t i = 0; i < n_ch; ++i) filtered(v, i) = buf[i].real() * scale;
  }

  const std::size_t n = cfg.grid_size;
  ImageGrid img{Grid<double>(n, n, 0.0), cfg.pixel_pitch_mm};
  const double center = (static_cast<double>(n) - 1.0) / 2.0;
  const double ch_center = (static_cast<double>(n_ch) - 1.0) / 2.0;
  std::vector<double> xs(n);
  for (std::size_t k = 0; k < n; ++k) xs[k] = (static_cast<double>(k) - center) * cfg.pixel_pitch_mm;
  for (std::size_t v = 0; v < n_views; ++v) {
    const double ct = std::cos(sino.view_angles[v]) / tau;
    const double st = std::sin(sino.view_angles[v]) / tau;
    const double* q = filtered.row(v);
    for (std::size_t r = 0; r < n; ++r) {
      const double y = (center - static_cast<double>(r)) * cfg.pixel_pitch_mm;
      double* out = img.pixels.row(r);
      for (std::size_t k = 0; k < n; ++k) {
        const double u = xs[k] * ct + y * st + ch_center;
        const double uf = std::floor(u);
        const long j = static_cast<long>(uf);
        if (j < 0 || j + 1 >= static_cast<long>(n_ch)) {
          if (j + 1 == static_cast<long>(n_ch) && u == uf) out[k] += q[j];
          continue;
        }
        const double t = u - uf;
        out[k] += (1.0 - t) * q[j] + t * q[j + 1];
      }
    }
  }
  img.pixels *= std::numbers::pi / static_cast<double>(n_views);
  return img;
}

}  // namespace specloss
