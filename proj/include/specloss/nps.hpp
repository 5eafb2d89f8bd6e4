#pragma once

// Noise power spectrum of reconstructed images, radially averaged, and the
// entropy flatness metric sum_i p_i log2(1 / p_i) of the sum-normalized curve.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "specloss/error.hpp"
#include "specloss/fft.hpp"
#include "specloss/fbp.hpp"
#include "specloss/grid.hpp"
#include "specloss/rfl1.hpp"

namespace specloss {

struct RoiSpec {
  std::size_t center_row = 0;
  std::size_t center_col = 0;
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t ensemble = 2;  // number of noise realizations expected
};

struct NpsOptions {
  std::size_t n_bins = 256;
  bool hann_window = false;
  double pixel_pitch_mm = 0.0;  // > 0: frequencies in cycles/mm, else cycles/pixel
};

struct NpsCurve {
  std::vector<double> frequency;  // lower bin edge; uniform from 0 toward fs/2
  std::vector<double> power;
  bool normalized = false;

  std::size_t n_bins() const noexcept { return power.size(); }
};

namespace detail {

inline void check_roi(const RoiSpec& roi, std::size_t rows, std::size_t cols) {
  if (roi.width == 0 || roi.height == 0) throw ValidationError("ROI must be non-empty");
  if (roi.center_row < roi.height / 2 || roi.center_col < roi.width / 2 ||
      roi.center_row - roi.height / 2 + roi.height > rows ||
      roi.center_col - roi.width / 2 + roi.width > cols) {
    throw ValidationError("ROI lies outside the image");
  }
}

}  // namespace detail

// Per realization: crop the ROI, subtract the ensemble-mean ROI, take the
// periodogram |DFT|^2 / (w h) on a grid zero-padded to at least 2 n_bins per
// axis, and average. The 2-D average is binned by floor(radius / bin width)
// with bin width 0.5 / n_bins cycles/pixel; each bin is the mean over its
// grid points, frequencies beyond 0.5 cycles/pixel are dropped. The
// ensemble-mean subtraction is compensated by the factor M / (M - 1).
inline NpsCurve estimate_nps(const std::vector<Grid<double>>& images, const RoiSpec& roi,
                             const NpsOptions& opt = {}) {
  if (images.size() < 2) throw ValidationError("estimate_nps: need >= 2 realizations");
  if (roi.ensemble != images.size()) {
    throw ValidationError("estimate_nps: ROI ensemble size " + std::to_string(roi.ensemble) +
                          " does not match " + std::to_string(images.size()) + " images");
  }
  if (opt.n_bins == 0) throw ValidationError("estimate_nps: n_bins must be >= 1");
  for (const auto& im : images) {
    if (!im.same_shape(images.front())) throw ValidationError("estimate_nps: image shapes differ");
  }
  detail::check_roi(roi, images.front().rows(), images.front().cols());

  const std::size_t r0 = roi.center_row - roi.height / 2;
  const std::size_t c0 = roi.center_col - roi.width / 2;
  std::vector<Grid<double>> rois;
  rois.reserve(images.size());
  for (const auto& im : images) rois.push_back(im.crop(r0, c0, roi.height, roi.width));
  // Mean as first + mean(x_k - first): exact zero residue for identical copies.
  const double m = static_cast<double>(images.size());
  Grid<double> mean(roi.height, roi.width, 0.0);
  for (const auto& r : rois) mean += r - rois.front();
  mean *= 1.0 / m;
  mean += rois.front();

  Grid<double> window(roi.height, roi.width, 1.0);
  if (opt.hann_window) {
    auto hann = [](std::size_t i, std::size_t n) {
      return n < 2 ? 1.0
                   : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                          static_cast<double>(n - 1));
    };
    for (std::size_t r = 0; r < roi.height; ++r) {
      for (std::size_t c = 0; c < roi.width; ++c) window(r, c) = hann(r, roi.height) * hann(c, roi.width);
    }
  }
  const double window_energy = sum_of_squares(window);

  const std::size_t pr = next_pow2(std::max(2 * opt.n_bins, roi.height));
  const std::size_t pc = next_pow2(std::max(2 * opt.n_bins, roi.width));
  Grid<double> avg(pr, pc, 0.0);
  for (auto& r : rois) {
    r -= mean;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] *= window[i];
    avg += power_spectrum_2d(r, pr, pc);
  }
  avg *= 1.0 / (m - 1.0) / window_energy;

  const double bin_width = 0.5 / static_cast<double>(opt.n_bins);
  std::vector<double> sum(opt.n_bins, 0.0);
  std::vector<std::size_t> count(opt.n_bins, 0);
  for (std::size_t ky = 0; ky < pr; ++ky) {
    const double fy = fft_frequency(ky, pr);
    for (std::size_t kx = 0; kx < pc; ++kx) {
      const double fx = fft_frequency(kx, pc);
      const double rho = std::sqrt(fx * fx + fy * fy);
      // Small tolerance keeps exact grid radii in their own bin.
      const auto bin = static_cast<std::size_t>(std::floor(rho / bin_width + 1e-9));
      if (bin >= opt.n_bins) continue;
      sum[bin] += avg(ky, kx);
      ++count[bin];
    }
  }
  NpsCurve curve;
  curve.frequency.resize(opt.n_bins);
  curve.power.resize(opt.n_bins);
  const double unit = opt.pixel_pitch_mm > 0.0 ? 1.0 / opt.pixel_pitch_mm : 1.0;
  for (std::size_t b = 0; b < opt.n_bins; ++b) {
    curve.frequency[b] = static_cast<double>(b) * bin_width * unit;
    curve.power[b] = count[b] ? sum[b] / static_cast<double>(count[b]) : 0.0;
  }
  return curve;
}

inline NpsCurve normalize_nps(const NpsCurve& curve) {
  double total = 0.0;
  for (double p : curve.power) {
    if (!(p >= 0.0)) throw ValidationError("normalize_nps: negative or non-finite power");
    total += p;
  }
  if (!(total > 0.0)) throw DegenerateInputError("normalize_nps: curve has zero total power");
  NpsCurve out = curve;
  for (double& p : out.power) p /= total;
  out.normalized = true;
  return out;
}

// Shannon entropy in bits; zero-power bins contribute nothing.
inline double entropy_flatness(const NpsCurve& curve) {
  if (!curve.normalized) throw UsageError("entropy_flatness: curve is not normalized");
  double total = 0.0;
  for (double p : curve.power) total += p;
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("entropy_flatness: power does not sum to 1");
  double h = 0.0;
  for (double p : curve.power) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

// Centered moving average over 2 * half_width + 1 bins, truncated at the ends.
inline NpsCurve smooth_nps(const NpsCurve& curve, std::size_t half_width) {
  NpsCurve out = curve;
  const std::size_t n = curve.power.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half_width ? i - half_width : 0;
    const std::size_t hi = std::min(n, i + half_width + 1);
    double s = 0.0;
    for (std::size_t j = lo; j < hi; ++j) s += curve.power[j];
    out.power[i] = s / static_cast<double>(hi - lo);
  }
  return out;
}

// Energy of `signal` at radial frequencies in [lo, hi] cycles/sample,
// measured on its own DFT grid so that [0, 0.5] returns sum(signal^2).
// Radii beyond 0.5 (the spectrum's corners) count as 0.5.
inline double band_energy(const Grid<double>& signal, double lo, double hi) {
  if (!(lo >= 0.0 && hi <= 0.5 && lo < hi)) {
    throw ValidationError("band_energy: band must satisfy 0 <= lo < hi <= 0.5");
  }
  if (signal.empty()) throw ValidationError("band_energy: empty signal");
  const std::size_t rows = signal.rows(), cols = signal.cols();
  const Grid<double> p = power_spectrum_2d(signal, rows, cols);
  const double norm = 1.0 / static_cast<double>(rows * cols);
  double e = 0.0;
  for (std::size_t ky = 0; ky < rows; ++ky) {
    const double fy = fft_frequency(ky, rows);
    for (std::size_t kx = 0; kx < cols; ++kx) {
      const double fx = fft_frequency(kx, cols);
      const double rho = std::min(0.5, std::sqrt(fx * fx + fy * fy));
      if (rho >= lo && rho <= hi) e += p(ky, kx);
    }
  }
  return e * norm;
}

inline std::string nps_to_csv(const NpsCurve& curve, const RoiSpec& roi) {
  std::ostringstream os;
  os.precision(17);
  os << "# roi_center_row=" << roi.center_row << " roi_center_col=" << roi.center_col
     << " roi_width=" << roi.width << " roi_height=" << roi.height << " ensemble=" << roi.ensemble
     << " normalized=" << (curve.normalized ? "true" : "false") << "\n";
  os << "omega,power\n";
  for (std::size_t i = 0; i < curve.power.size(); ++i) {
    os << curve.frequency[i] << "," << curve.power[i] << "\n";
  }
  return os.str();
}

inline NpsCurve nps_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  NpsCurve c;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') {
      if (line.find("normalized=true") != std::string::npos) c.normalized = true;
      continue;
    }
    if (line == "omega,power") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("nps csv: malformed row '" + line + "'");
    c.frequency.push_back(std::stod(line.substr(0, comma)));
    c.power.push_back(std::stod(line.substr(comma + 1)));
  }
  return c;
}

}  // namespace specloss
