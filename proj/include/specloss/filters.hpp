#pragma once

// Loss-shaping FIR filters: windowed-sinc lowpass, its spectral complement,
// separable zero-phase application with mirror boundaries and the exact
// adjoint of that application.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "specloss/error.hpp"
#include "specloss/grid.hpp"
#include "specloss/rfl1.hpp"

namespace specloss {

enum class FilterRole { f1_lowpass, f2_highpass, identity };

inline const char* to_string(FilterRole r) {
  switch (r) {
    case FilterRole::f1_lowpass: return "f1_lowpass";
    case FilterRole::f2_highpass: return "f2_highpass";
    case FilterRole::identity: return "identity";
  }
  return "?";
}

inline FilterRole filter_role_from_string(const std::string& s) {
  if (s == "f1_lowpass") return FilterRole::f1_lowpass;
  if (s == "f2_highpass") return FilterRole::f2_highpass;
  if (s == "identity") return FilterRole::identity;
  throw ValidationError("unknown filter role '" + s + "'");
}

struct FirFilter {
  std::vector<double> taps;  // odd length, symmetric about the center tap
  FilterRole role = FilterRole::identity;
  double cutoff = 0.0;  // cycles/sample

  std::size_t half_width() const noexcept { return taps.size() / 2; }
};

// Axis 0 runs down the rows (sinogram views), axis 1 along a row (channels).
enum class Axes : unsigned { none = 0, rows = 1, cols = 2, both = 3 };

inline bool has_axis(Axes set, Axes a) {
  return (static_cast<unsigned>(set) & static_cast<unsigned>(a)) != 0;
}

inline Axes axes_from_string(const std::string& s) {
  if (s == "both") return Axes::both;
  if (s == "rows" || s == "views") return Axes::rows;
  if (s == "cols" || s == "channels") return Axes::cols;
  throw ValidationError("unknown filter axes '" + s + "'");
}

inline const char* to_string(Axes a) {
  switch (a) {
    case Axes::both: return "both";
    case Axes::rows: return "rows";
    case Axes::cols: return "cols";
    case Axes::none: return "none";
  }
  return "?";
}

namespace detail {

// Hamming-windowed sinc with unit DC gain.
inline std::vector<double> windowed_sinc(double cutoff, std::size_t n_taps) {
  const std::size_t half = n_taps / 2;
  std::vector<double> h(n_taps);
  const double span = static_cast<double>(n_taps - 1);
  for (std::size_t m = 0; m <= half; ++m) {
    const double x = 2.0 * cutoff * static_cast<double>(m);
    const double sinc = m == 0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double w =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(half + m) / span);
    h[half + m] = h[half - m] = 2.0 * cutoff * sinc * w;
  }
  double sum = 0.0;
  for (double v : h) sum += v;
  for (double& v : h) v /= sum;
  return h;
}

}  // namespace detail

inline void validate(const FirFilter& f) {
  const auto n = f.taps.size();
  if (n % 2 == 0) throw ValidationError("filter must have an odd number of taps");
  for (std::size_t i = 0; i < n / 2; ++i) {
    if (f.taps[i] != f.taps[n - 1 - i]) throw ValidationError("filter taps must be symmetric");
  }
}

inline FirFilter design_fir(FilterRole role, double cutoff, std::size_t n_taps) {
  if (role == FilterRole::identity) return FirFilter{{1.0}, FilterRole::identity, 0.0};
  if (n_taps % 2 == 0 || n_taps < 5) {
    throw ValidationError("design_fir: n_taps must be odd and >= 5, got " + std::to_string(n_taps));
  }
  if (!(cutoff > 0.0 && cutoff < 0.5)) {
    throw ValidationError("design_fir: cutoff must lie in (0, 0.5)");
  }
  auto taps = detail::windowed_sinc(cutoff, n_taps);
  if (role == FilterRole::f2_highpass) {
    for (double& v : taps) v = -v;
    taps[n_taps / 2] += 1.0;
  }
  return FirFilter{std::move(taps), role, cutoff};
}

// Magnitude of the DTFT at n_points frequencies spaced uniformly over [0, 0.5].
inline std::vector<std::pair<double, double>> frequency_response(const FirFilter& f,
                                                                 std::size_t n_points) {
  if (n_points < 2) throw ValidationError("frequency_response: n_points must be >= 2");
  const std::size_t half = f.half_width();
  std::vector<std::pair<double, double>> out(n_points);
  for (std::size_t k = 0; k < n_points; ++k) {
    const double w = 0.5 * static_cast<double>(k) / static_cast<double>(n_points - 1);
    double h = f.taps[half];
    for (std::size_t m = 1; m <= half; ++m) {
      h += 2.0 * f.taps[half + m] * std::cos(2.0 * std::numbers::pi * w * static_cast<double>(m));
    }
    out[k] = {w, std::abs(h)};
  }
  return out;
}

namespace detail {

// Whole-sample mirror: index -k maps to k, n-1+k maps to n-1-k.
inline std::size_t mirror_index(long i, long n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

// Filters `count` lines of length `n`; element j of line l is at
// data[l * line_stride + j * elem_stride].
template <bool Adjoint>
void filter_lines(Grid<double>& g, const std::vector<double>& taps, std::size_t n,
                  std::size_t count, std::size_t line_stride, std::size_t elem_stride) {
  const long half = static_cast<long>(taps.size() / 2);
  const long len = static_cast<long>(n);
  std::vector<double> ext(n + 2 * static_cast<std::size_t>(half));
  std::vector<double> out(n);
  auto data = g.values();
  for (std::size_t l = 0; l < count; ++l) {
    double* base = data.data() + l * line_stride;
    if constexpr (!Adjoint) {
      for (long i = -half; i < len + half; ++i) {
        ext[static_cast<std::size_t>(i + half)] = base[mirror_index(i, len) * elem_stride];
      }
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < taps.size(); ++k) acc += taps[k] * ext[i + k];
        out[i] = acc;
      }
    } else {
      std::fill(ext.begin(), ext.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = base[i * elem_stride];
        for (std::size_t k = 0; k < taps.size(); ++k) ext[i + k] += taps[k] * gi;
      }
      std::fill(out.begin(), out.end(), 0.0);
      for (long i = -half; i < len + half; ++i) {
        out[mirror_index(i, len)] += ext[static_cast<std::size_t>(i + half)];
      }
    }
    for (std::size_t i = 0; i < n; ++i) base[i * elem_stride] = out[i];
  }
}

template <bool Adjoint>
Grid<double> apply_separable(Grid<double> signal, const FirFilter& f, Axes axes) {
  if (f.taps.size() == 1) {
    signal *= f.taps[0];
    return signal;
  }
  const std::size_t half = f.half_width();
  if ((has_axis(axes, Axes::rows) && signal.rows() <= half) ||
      (has_axis(axes, Axes::cols) && signal.cols() <= half)) {
    throw SizeError("apply_filter: signal " + std::to_string(signal.rows()) + "x" +
                    std::to_string(signal.cols()) + " is too small for a " +
                    std::to_string(f.taps.size()) + "-tap filter");
  }
  if (!all_finite(signal)) throw DataError("apply_filter: non-finite signal");
  const std::size_t rows = signal.rows();
  const std::size_t cols = signal.cols();
  if (has_axis(axes, Axes::cols)) filter_lines<Adjoint>(signal, f.taps, cols, rows, cols, 1);
  if (has_axis(axes, Axes::rows)) filter_lines<Adjoint>(signal, f.taps, rows, cols, 1, cols);
  return signal;
}

}  // namespace detail

// Zero-phase separable convolution along the selected axes, mirror-extended.
inline Grid<double> apply_filter(const Grid<double>& signal, const FirFilter& f,
                                 Axes axes = Axes::both) {
  return detail::apply_separable<false>(signal, f, axes);
}

// Transpose of apply_filter under the same boundary rule.
inline Grid<double> apply_filter_adjoint(const Grid<double>& signal, const FirFilter& f,
                                         Axes axes = Axes::both) {
  return detail::apply_separable<true>(signal, f, axes);
}

inline std::string filter_to_csv(const FirFilter& f) {
  std::ostringstream os;
  os.precision(17);
  os << "# role=" << to_string(f.role) << " cutoff=" << f.cutoff << " taps=" << f.taps.size()
     << "\n";
  for (double t : f.taps) os << t << "\n";
  return os.str();
}

inline FirFilter filter_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  FirFilter f;
  std::size_t declared = 0;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string kv;
      while (hs >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const auto key = kv.substr(0, eq);
        const auto val = kv.substr(eq + 1);
        if (key == "role") f.role = filter_role_from_string(val);
        else if (key == "cutoff") f.cutoff = std::stod(val);
        else if (key == "taps") declared = std::stoul(val);
      }
      header = true;
      continue;
    }
    f.taps.push_back(std::stod(line));
  }
  if (!header) throw DataError("filter csv: missing '# role=...' header");
  if (declared != f.taps.size()) throw DataError("filter csv: tap count does not match header");
  validate(f);
  return f;
}

inline void write_filter_csv(const std::filesystem::path& path, const FirFilter& f) {
  detail::write_file_atomic(path, filter_to_csv(f));
}

}  // namespace specloss
