#pragma once

// Frequency-shaped training losses and their exact gradients with respect to
// the network output.
//
//   S = X - g(Y)              standard error
//   T = Y - g(Y)              preservation error
//   e = f1(S) + alpha f2(T)   composite error
//   L = sum_n w_n phi(e_n)    phi(e) = e^2 or |e|
//
// With alpha = 0 this is the passband-restricted loss on S alone.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "specloss/error.hpp"
#include "specloss/filters.hpp"
#include "specloss/grid.hpp"
#include "specloss/rng.hpp"

namespace specloss {

enum class Phi { squared, absolute };

inline const char* to_string(Phi p) { return p == Phi::squared ? "squared" : "absolute"; }

inline Phi phi_from_string(const std::string& s) {
  if (s == "squared") return Phi::squared;
  if (s == "absolute") return Phi::absolute;
  throw ValidationError("unknown phi '" + s + "' (expected squared|absolute)");
}

struct LossConfig {
  FirFilter f1 = design_fir(FilterRole::identity, 0.0, 1);
  FirFilter f2 = design_fir(FilterRole::identity, 0.0, 1);
  double alpha = 0.0;
  Phi phi = Phi::squared;
  std::optional<Grid<double>> weights;
  Axes axes = Axes::both;
};

struct LossValue {
  double value = 0.0;
  Grid<double> gradient_wrt_output;

  double mean() const {
    return gradient_wrt_output.empty() ? 0.0
                                       : value / static_cast<double>(gradient_wrt_output.size());
  }
};

inline void validate(const LossConfig& cfg) {
  if (!(cfg.alpha >= 0.0)) throw ValidationError("loss alpha must be >= 0");
  validate(cfg.f1);
  validate(cfg.f2);
  if (cfg.weights) {
    for (double w : cfg.weights->values()) {
      if (!(w >= 0.0)) throw ValidationError("loss weights must be >= 0");
    }
  }
}

inline Grid<double> standard_error(const Grid<double>& target, const Grid<double>& output) {
  require_same_shape(target, output, "standard_error");
  return target - output;
}

inline Grid<double> preservation_error(const Grid<double>& input, const Grid<double>& output) {
  require_same_shape(input, output, "preservation_error");
  return input - output;
}

inline double weighted_mse(const Grid<double>& target, const Grid<double>& output,
                           const Grid<double>& weights) {
  require_same_shape(target, output, "weighted_mse");
  require_same_shape(target, weights, "weighted_mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw ValidationError("weighted_mse: negative weight");
    const double d = target[i] - output[i];
    acc += weights[i] * d * d;
  }
  return acc;
}

namespace detail {

inline double phi_value(Phi phi, double e) { return phi == Phi::squared ? e * e : std::abs(e); }

// d phi / d e; the subgradient of |e| at 0 is taken as 0.
inline double phi_slope(Phi phi, double e) {
  if (phi == Phi::squared) return 2.0 * e;
  return e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
}

}  // namespace detail

// The f1-only loss, phi(f1(X - g)), summed.
inline double passband_loss(const Grid<double>& target, const Grid<double>& output,
                            const FirFilter& f1, Phi phi, Axes axes = Axes::both) {
  const Grid<double> e = apply_filter(standard_error(target, output), f1, axes);
  double acc = 0.0;
  for (double v : e.values()) acc += detail::phi_value(phi, v);
  return acc;
}

inline Grid<double> composite_error(const Grid<double>& target, const Grid<double>& input,
                                    const Grid<double>& output, const LossConfig& cfg) {
  Grid<double> e = apply_filter(standard_error(target, output), cfg.f1, cfg.axes);
  if (cfg.alpha != 0.0) {
    const Grid<double> t = apply_filter(preservation_error(input, output), cfg.f2, cfg.axes);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += cfg.alpha * t[i];
  }
  return e;
}

inline LossValue composite_loss(const Grid<double>& target, const Grid<double>& input,
                                const Grid<double>& output, const LossConfig& cfg) {
  require_same_shape(target, input, "composite_loss");
  require_same_shape(target, output, "composite_loss");
  validate(cfg);
  if (cfg.weights) require_same_shape(target, *cfg.weights, "composite_loss weights");

  const Grid<double> e = composite_error(target, input, output, cfg);
  Grid<double> slope(e.rows(), e.cols());
  double value = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double w = cfg.weights ? (*cfg.weights)[i] : 1.0;
    value += w * detail::phi_value(cfg.phi, e[i]);
    slope[i] = w * detail::phi_slope(cfg.phi, e[i]);
  }
  // de/dg = -(f1 + alpha f2), so the gradient is -(f1^T + alpha f2^T) slope.
  Grid<double> grad = apply_filter_adjoint(slope, cfg.f1, cfg.axes);
  if (cfg.alpha != 0.0) {
    const Grid<double> g2 = apply_filter_adjoint(slope, cfg.f2, cfg.axes);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += cfg.alpha * g2[i];
  }
  grad *= -1.0;
  return LossValue{value, std::move(grad)};
}

// Largest relative deviation between the analytic output gradient and
// central differences over `n_coords` random coordinates of a random
// unit-scale instance. Relative deviation is |a - n| / max(|a|, |n|, 1e-3).
// For phi = absolute, coordinates whose perturbation moves any composite
// error element across zero are skipped (the loss has a kink there).
inline double loss_gradient_check(const LossConfig& cfg, std::size_t rows, std::size_t cols,
                                  std::uint64_t seed, std::size_t n_coords = 100,
                                  double step = 1e-4) {
  Rng rng(seed);
  auto random_grid = [&] {
    Grid<double> g(rows, cols);
    for (auto& v : g.values()) v = rng.uniform(-1.0, 1.0);
    return g;
  };
  const Grid<double> x = random_grid();
  const Grid<double> y = random_grid();
  Grid<double> out = random_grid();
  const LossValue base = composite_loss(x, y, out, cfg);

  double worst = 0.0;
  std::size_t checked = 0;
  const std::size_t max_attempts = 50 * n_coords;
  for (std::size_t attempt = 0; attempt < max_attempts && checked < n_coords; ++attempt) {
    const std::size_t idx = rng.below(out.size());
    const double saved = out[idx];
    out[idx] = saved + step;
    const Grid<double> e_plus = composite_error(x, y, out, cfg);
    const double l_plus = composite_loss(x, y, out, cfg).value;
    out[idx] = saved - step;
    const Grid<double> e_minus = composite_error(x, y, out, cfg);
    const double l_minus = composite_loss(x, y, out, cfg).value;
    out[idx] = saved;
    if (cfg.phi == Phi::absolute) {
      bool crosses = false;
      for (std::size_t i = 0; i < e_plus.size() && !crosses; ++i) {
        crosses = (e_plus[i] > 0.0) != (e_minus[i] > 0.0);
      }
      if (crosses) continue;
    }
    const double numeric = (l_plus - l_minus) / (2.0 * step);
    const double analytic = base.gradient_wrt_output[idx];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
    ++checked;
  }
  return worst;
}

}  // namespace specloss
