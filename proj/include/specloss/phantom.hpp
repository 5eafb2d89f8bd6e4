#pragma once

// Synthetic phantoms, parallel-beam forward projection, Beer-Lambert photon
// counts and photon/electronic noise.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "specloss/error.hpp"
#include "specloss/grid.hpp"
#include "specloss/rng.hpp"

namespace specloss {

// Geometry in normalized units: the field of view spans [-1, 1] on both axes.
struct Ellipse {
  double center_x = 0.0;
  double center_y = 0.0;
  double semi_a = 0.5;
  double semi_b = 0.5;
  double rotation_rad = 0.0;
  double attenuation_per_mm = 0.0;
};

struct Phantom {
  std::vector<Ellipse> ellipses;
  std::size_t grid_size = 256;
  double pixel_pitch_mm = 1.0;
};

enum class SinogramDomain { line_integral, counts };

inline const char* to_string(SinogramDomain d) {
  return d == SinogramDomain::counts ? "counts" : "line_integral";
}

// values(view, channel). Channel j sits at signed offset
// (j - (n_channels - 1) / 2) * channel_pitch_mm from the rotation axis.
struct Sinogram {
  Grid<double> values;
  SinogramDomain domain = SinogramDomain::line_integral;
  std::vector<double> view_angles;
  double channel_pitch_mm = 1.0;

  std::size_t n_views() const noexcept { return values.rows(); }
  std::size_t n_channels() const noexcept { return values.cols(); }
};

struct NoiseSpec {
  double i0 = 1e4;
  double sigma_e = 5.0;
  std::uint64_t seed = 0;
  // Noisy counts below this value are raised to it so downstream logs stay finite.
  double floor = 0.5;
};

inline std::vector<double> uniform_view_angles(std::size_t n_views) {
  std::vector<double> a(n_views);
  for (std::size_t i = 0; i < n_views; ++i) {
    a[i] = std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_views);
  }
  return a;
}

inline void validate(const Phantom& p) {
  if (p.grid_size < 16) throw ValidationError("phantom grid_size must be >= 16");
  if (!(p.pixel_pitch_mm > 0.0)) throw ValidationError("phantom pixel_pitch_mm must be > 0");
  for (const auto& e : p.ellipses) {
    if (!(e.attenuation_per_mm >= 0.0)) {
      throw ValidationError("ellipse attenuation must be >= 0");
    }
    if (!(e.semi_a > 0.0) || !(e.semi_b > 0.0)) {
      throw ValidationError("ellipse semi-axes must be > 0");
    }
  }
}

inline void validate(const NoiseSpec& s) {
  if (!(s.i0 > 0.0)) throw ValidationError("noise i0 must be > 0");
  if (!(s.sigma_e >= 0.0)) throw ValidationError("noise sigma_e must be >= 0");
  if (!(s.floor >= 0.0)) throw ValidationError("noise floor must be >= 0");
}

// Sum of ellipse indicators, sampled at pixel centers (no antialiasing).
inline ImageGrid generate_phantom(const Phantom& spec) {
  validate(spec);
  const std::size_t n = spec.grid_size;
  ImageGrid img{Grid<double>(n, n, 0.0), spec.pixel_pitch_mm};
  const double nn = static_cast<double>(n);
  for (const auto& e : spec.ellipses) {
    const double c = std::cos(e.rotation_rad);
    const double s = std::sin(e.rotation_rad);
    for (std::size_t r = 0; r < n; ++r) {
      const double y = 1.0 - 2.0 * (static_cast<double>(r) + 0.5) / nn;
      for (std::size_t k = 0; k < n; ++k) {
        const double x = 2.0 * (static_cast<double>(k) + 0.5) / nn - 1.0;
        const double dx = x - e.center_x;
        const double dy = y - e.center_y;
        const double u = (dx * c + dy * s) / e.semi_a;
        const double v = (-dx * s + dy * c) / e.semi_b;
        if (u * u + v * v <= 1.0) img.pixels(r, k) += e.attenuation_per_mm;
      }
    }
  }
  return img;
}

namespace detail {

// Bilinear sample at fractional (row, col); pixels outside the grid are 0.
inline double bilinear_zero(const Grid<double>& g, double fr, double fc) {
  const double r0f = std::floor(fr);
  const double c0f = std::floor(fc);
  const auto r0 = static_cast<long>(r0f);
  const auto c0 = static_cast<long>(c0f);
  const double tr = fr - r0f;
  const double tc = fc - c0f;
  const auto rows = static_cast<long>(g.rows());
  const auto cols = static_cast<long>(g.cols());
  auto at = [&](long r, long c) -> double {
    if (r < 0 || c < 0 || r >= rows || c >= cols) return 0.0;
    return g(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  return (1.0 - tr) * ((1.0 - tc) * at(r0, c0) + tc * at(r0, c0 + 1)) +
         tr * ((1.0 - tc) * at(r0 + 1, c0) + tc * at(r0 + 1, c0 + 1));
}

}  // namespace detail

// Parallel-beam line integrals. Each ray is sampled every pixel_pitch/2 with
// bilinear interpolation; the result is in attenuation x mm.
inline Sinogram radon_forward(const ImageGrid& img, std::size_t n_views, std::size_t n_channels,
                              double channel_pitch_mm = 0.0) {
  if (n_views < 1 || n_channels < 1) throw ValidationError("radon: need >= 1 view and channel");
  if (!all_finite(img.pixels)) throw DataError("radon: image has non-finite pixels");
  if (channel_pitch_mm <= 0.0) channel_pitch_mm = img.pixel_pitch_mm;

  const Grid<double>& g = img.pixels;
  const double pitch = img.pixel_pitch_mm;
  const double half_r = (static_cast<double>(g.rows()) - 1.0) / 2.0;
  const double half_c = (static_cast<double>(g.cols()) - 1.0) / 2.0;
  // Radius (mm) of a circle enclosing every pixel footprint.
  const double reach = (std::hypot(half_r, half_c) + 1.5) * pitch;
  const double step = pitch / 2.0;

  Sinogram sino{Grid<double>(n_views, n_channels, 0.0), SinogramDomain::line_integral,
                uniform_view_angles(n_views), channel_pitch_mm};
  const double ch_center = (static_cast<double>(n_channels) - 1.0) / 2.0;

  for (std::size_t v = 0; v < n_views; ++v) {
    const double ct = std::cos(sino.view_angles[v]);
    const double st = std::sin(sino.view_angles[v]);
    for (std::size_t j = 0; j < n_channels; ++j) {
      const double s = (static_cast<double>(j) - ch_center) * channel_pitch_mm;
      if (std::abs(s) >= reach) continue;
      const double t_max = std::sqrt(reach * reach - s * s);
      const auto n_steps = static_cast<long>(std::ceil(t_max / step));
      double acc = 0.0;
      for (long i = -n_steps; i <= n_steps; ++i) {
        const double t = static_cast<double>(i) * step;
        const double x = s * ct - t * st;
        const double y = s * st + t * ct;
        acc += detail::bilinear_zero(g, half_r - y / pitch, x / pitch + half_c);
      }
      sino.values(v, j) = acc * step;
    }
  }
  return sino;
}

// counts = i0 * exp(-p); no clamping.
inline Sinogram attenuation_to_counts(const Sinogram& sino, double i0) {
  if (sino.domain != SinogramDomain::line_integral) {
    throw UsageError("attenuation_to_counts: expected a line-integral sinogram");
  }
  if (!(i0 > 0.0)) throw ValidationError("attenuation_to_counts: i0 must be > 0");
  Sinogram out = sino;
  out.domain = SinogramDomain::counts;
  for (auto& v : out.values.values()) v = i0 * std::exp(-v);
  return out;
}

// Poisson(clean) + Normal(0, sigma_e^2) per element, raised to spec.floor.
// Elements are visited in row-major order; each draws its Poisson variate
// and then (when sigma_e > 0) one normal variate from a single stream.
inline Sinogram add_noise(const Sinogram& sino, const NoiseSpec& spec) {
  if (sino.domain != SinogramDomain::counts) {
    throw UsageError("add_noise: expected a counts sinogram");
  }
  validate(spec);
  Rng rng(spec.seed);
  Sinogram out = sino;
  for (auto& v : out.values.values()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("add_noise: negative or non-finite counts");
    double noisy = rng.poisson(v);
    if (spec.sigma_e > 0.0) noisy += spec.sigma_e * rng.normal();
    v = noisy < spec.floor ? spec.floor : noisy;
  }
  return out;
}

}  // namespace specloss
