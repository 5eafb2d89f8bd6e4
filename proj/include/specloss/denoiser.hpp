#pragma once

// Counts-domain denoisers trained under the composite loss.
//
// ConvDenoiser: stack of 3x3 "same" convolutions with leaky-ReLU between
// layers and an optional residual connection (output = input + correction).
// FreeParameterModel: g(Y) = theta, one value per element, used to probe the
// loss itself without any architecture in the way.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "specloss/error.hpp"
#include "specloss/grid.hpp"
#include "specloss/loss.hpp"
#include "specloss/phantom.hpp"
#include "specloss/rfl1.hpp"
#include "specloss/rng.hpp"

namespace specloss {

struct Architecture {
  std::vector<std::size_t> widths{1, 16, 16, 16, 16, 1};
  double leaky_slope = 0.1;
  bool residual = true;
  // Multiplies the last layer's output. Setting it to the noise level of the
  // normalized input keeps the correction's units comparable to Adam's steps.
  double correction_scale = 1.0;

  std::size_t n_layers() const noexcept { return widths.size() - 1; }
};

template <typename T>
class ConvDenoiser {
 public:
  using scalar_type = T;
  static constexpr std::size_t kernel = 3;
  static constexpr std::size_t min_extent = 16;

  // Activations of one forward pass, kept for backward().
  struct Tape {
    std::size_t rows = 0, cols = 0;
    std::vector<std::vector<T>> activations;  // input of each layer, [C][H][W]
  };

  // All parameters zero.
  explicit ConvDenoiser(Architecture arch = {}) : arch_(std::move(arch)) {
    if (arch_.widths.size() < 2 || arch_.widths.front() != 1 || arch_.widths.back() != 1) {
      throw ValidationError("denoiser widths must start and end with one channel");
    }
    if (!(arch_.correction_scale > 0.0) || !std::isfinite(arch_.correction_scale)) {
      throw ValidationError("denoiser correction_scale must be finite and > 0");
    }
    std::size_t off = 0;
    for (std::size_t l = 0; l < arch_.n_layers(); ++l) {
      w_off_.push_back(off);
      off += arch_.widths[l + 1] * arch_.widths[l] * kernel * kernel;
      b_off_.push_back(off);
      off += arch_.widths[l + 1];
    }
    params_.assign(off, T{0});
  }

  // Kernels uniform in +-sqrt(6 / ((1 + slope^2) fan_in)), biases zero. With
  // a residual connection the output layer starts at zero, so the initial
  // model is exactly the identity map.
  static ConvDenoiser initialized(Architecture arch, std::uint64_t seed) {
    ConvDenoiser m(std::move(arch));
    Rng rng(seed);
    const double gain = 2.0 / (1.0 + m.arch_.leaky_slope * m.arch_.leaky_slope);
    const std::size_t n_random = m.arch_.residual ? m.n_layers() - 1 : m.n_layers();
    for (std::size_t l = 0; l < n_random; ++l) {
      const double fan_in = static_cast<double>(m.arch_.widths[l] * kernel * kernel);
      const double bound = std::sqrt(3.0 * gain / fan_in);
      auto w = m.layer_weights(l);
      for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    return m;
  }

  const Architecture& architecture() const noexcept { return arch_; }
  std::size_t n_layers() const noexcept { return arch_.n_layers(); }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<T> parameters() noexcept { return params_; }
  std::span<const T> parameters() const noexcept { return params_; }

  std::span<T> layer_weights(std::size_t l) noexcept {
    return {params_.data() + w_off_[l], b_off_[l] - w_off_[l]};
  }
  std::span<const T> layer_weights(std::size_t l) const noexcept {
    return {params_.data() + w_off_[l], b_off_[l] - w_off_[l]};
  }
  std::span<T> layer_bias(std::size_t l) noexcept {
    return {params_.data() + b_off_[l], arch_.widths[l + 1]};
  }
  std::span<const T> layer_bias(std::size_t l) const noexcept {
    return {params_.data() + b_off_[l], arch_.widths[l + 1]};
  }

  Grid<T> forward(const Grid<T>& input) const {
    Tape tape;
    return forward(input, tape);
  }

  Grid<T> forward(const Grid<T>& input, Tape& tape) const {
    check_input(input);
    const std::size_t h = input.rows(), w = input.cols(), plane = h * w;
    tape.rows = h;
    tape.cols = w;
    tape.activations.assign(n_layers(), {});
    tape.activations[0].assign(input.values().begin(), input.values().end());
    std::vector<T> z;
    for (std::size_t l = 0; l < n_layers(); ++l) {
      const std::size_t cout = arch_.widths[l + 1];
      z.assign(cout * plane, T{0});
      conv_forward(l, tape.activations[l], z, h, w);
      if (l + 1 < n_layers()) {
        const T slope = static_cast<T>(arch_.leaky_slope);
        for (auto& v : z) v = v > T{0} ? v : slope * v;
        tape.activations[l + 1] = z;
      }
    }
    Grid<T> out(h, w, std::vector<T>(z.begin(), z.end()));
    if (arch_.correction_scale != 1.0) out *= static_cast<T>(arch_.correction_scale);
    if (arch_.residual) out += input;
    return out;
  }

  // Accumulates d<upstream, output>/d theta into `grad`.
  void backward(const Tape& tape, const Grid<T>& upstream, std::span<T> grad) const {
    const std::size_t h = tape.rows, w = tape.cols, plane = h * w;
    if (upstream.rows() != h || upstream.cols() != w) {
      throw UsageError("backward: upstream gradient shape does not match output");
    }
    if (grad.size() != params_.size()) throw UsageError("backward: gradient buffer size");
    std::vector<T> dz(upstream.values().begin(), upstream.values().end());
    if (arch_.correction_scale != 1.0) {
      for (auto& v : dz) v *= static_cast<T>(arch_.correction_scale);
    }
    std::vector<T> da;
    const T slope = static_cast<T>(arch_.leaky_slope);
    for (std::size_t l = n_layers(); l-- > 0;) {
      conv_param_grad(l, tape.activations[l], dz, grad, h, w);
      if (l == 0) break;
      da.assign(arch_.widths[l] * plane, T{0});
      conv_input_grad(l, dz, da, h, w);
      const auto& a = tape.activations[l];
      for (std::size_t i = 0; i < da.size(); ++i) {
        if (!(a[i] > T{0})) da[i] *= slope;
      }
      dz.swap(da);
    }
  }

  std::vector<T> backward(const Grid<T>& input, const Grid<T>& upstream) const {
    Tape tape;
    forward(input, tape);
    std::vector<T> grad(params_.size(), T{0});
    backward(tape, upstream, grad);
    return grad;
  }

 private:
  void check_input(const Grid<T>& input) const {
    if (input.rows() < min_extent || input.cols() < min_extent) {
      throw SizeError("denoiser input must be at least 16x16");
    }
  }

  // Output rows/cols where a tap offset d in {-1, 0, 1} reads inside the input.
  static std::size_t lo(long d) { return d < 0 ? 1 : 0; }
  static std::size_t hi(long d, std::size_t n) { return d > 0 ? n - 1 : n; }

  void conv_forward(std::size_t l, const std::vector<T>& in, std::vector<T>& out, std::size_t h,
                    std::size_t w) const {
    const std::size_t cin = arch_.widths[l], cout = arch_.widths[l + 1], plane = h * w;
    const T* wt = params_.data() + w_off_[l];
    const T* bias = params_.data() + b_off_[l];
    for (std::size_t o = 0; o < cout; ++o) {
      T* dst_plane = out.data() + o * plane;
      std::fill(dst_plane, dst_plane + plane, bias[o]);
      for (std::size_t y = 0; y < h; ++y) {
        T* dst = dst_plane + y * w;
        for (std::size_t i = 0; i < cin; ++i) {
          const T* k = wt + (o * cin + i) * 9;
          for (long dy = -1; dy <= 1; ++dy) {
            const long sy = static_cast<long>(y) + dy;
            if (sy < 0 || sy >= static_cast<long>(h)) continue;
            const T* src = in.data() + i * plane + static_cast<std::size_t>(sy) * w;
            for (long dx = -1; dx <= 1; ++dx) {
              const T kv = k[(dy + 1) * 3 + (dx + 1)];
              const std::size_t x0 = lo(dx), n = hi(dx, w) - x0;
              const T* s = src + static_cast<long>(x0) + dx;
              T* d = dst + x0;
              for (std::size_t x = 0; x < n; ++x) d[x] += kv * s[x];
            }
          }
        }
      }
    }
  }

  void conv_param_grad(std::size_t l, const std::vector<T>& in, const std::vector<T>& dz,
                       std::span<T> grad, std::size_t h, std::size_t w) const {
    const std::size_t cin = arch_.widths[l], cout = arch_.widths[l + 1], plane = h * w;
    T* gw = grad.data() + w_off_[l];
    T* gb = grad.data() + b_off_[l];
    std::vector<T> acc(w);
    for (std::size_t o = 0; o < cout; ++o) {
      const T* d_plane = dz.data() + o * plane;
      std::fill(acc.begin(), acc.end(), T{0});
      for (std::size_t p = 0; p < h; ++p) {
        const T* d = d_plane + p * w;
        for (std::size_t x = 0; x < w; ++x) acc[x] += d[x];
      }
      T sb{0};
      for (T v : acc) sb += v;
      gb[o] += sb;
      for (std::size_t i = 0; i < cin; ++i) {
        const T* a_plane = in.data() + i * plane;
        for (long dy = -1; dy <= 1; ++dy) {
          for (long dx = -1; dx <= 1; ++dx) {
            std::fill(acc.begin(), acc.end(), T{0});
            const std::size_t y0 = lo(dy), y1 = hi(dy, h);
            const std::size_t x0 = lo(dx), n = hi(dx, w) - x0;
            for (std::size_t y = y0; y < y1; ++y) {
              const T* d = d_plane + y * w + x0;
              const T* s = a_plane + static_cast<std::size_t>(static_cast<long>(y) + dy) * w +
                           static_cast<std::size_t>(static_cast<long>(x0) + dx);
              for (std::size_t x = 0; x < n; ++x) acc[x] += d[x] * s[x];
            }
            T s{0};
            for (T v : acc) s += v;
            gw[(o * cin + i) * 9 + static_cast<std::size_t>((dy + 1) * 3 + (dx + 1))] += s;
          }
        }
      }
    }
  }

  void conv_input_grad(std::size_t l, const std::vector<T>& dz, std::vector<T>& da,
                       std::size_t h, std::size_t w) const {
    const std::size_t cin = arch_.widths[l], cout = arch_.widths[l + 1], plane = h * w;
    const T* wt = params_.data() + w_off_[l];
    for (std::size_t i = 0; i < cin; ++i) {
      T* a_plane = da.data() + i * plane;
      for (std::size_t o = 0; o < cout; ++o) {
        const T* k = wt + (o * cin + i) * 9;
        const T* d_plane = dz.data() + o * plane;
        for (long dy = -1; dy <= 1; ++dy) {
          const std::size_t y0 = lo(dy), y1 = hi(dy, h);
          for (long dx = -1; dx <= 1; ++dx) {
            const T kv = k[(dy + 1) * 3 + (dx + 1)];
            const std::size_t x0 = lo(dx), n = hi(dx, w) - x0;
            for (std::size_t y = y0; y < y1; ++y) {
              const T* d = d_plane + y * w + x0;
              T* s = a_plane + static_cast<std::size_t>(static_cast<long>(y) + dy) * w +
                     static_cast<std::size_t>(static_cast<long>(x0) + dx);
              for (std::size_t x = 0; x < n; ++x) s[x] += kv * d[x];
            }
          }
        }
      }
    }
  }

  Architecture arch_;
  std::vector<std::size_t> w_off_, b_off_;
  std::vector<T> params_;
};

// g(Y) = theta. The optimum of the loss is reachable exactly.
template <typename T>
class FreeParameterModel {
 public:
  using scalar_type = T;

  struct Tape {};

  explicit FreeParameterModel(Grid<T> theta) : theta_(std::move(theta)) {}

  std::size_t parameter_count() const noexcept { return theta_.size(); }
  std::span<T> parameters() noexcept { return theta_.values(); }
  std::span<const T> parameters() const noexcept { return theta_.values(); }
  const Grid<T>& theta() const noexcept { return theta_; }

  Grid<T> forward(const Grid<T>& input) const {
    if (!input.same_shape(theta_)) throw UsageError("free-parameter model: input shape");
    return theta_;
  }
  Grid<T> forward(const Grid<T>& input, Tape&) const { return forward(input); }

  void backward(const Tape&, const Grid<T>& upstream, std::span<T> grad) const {
    if (!upstream.same_shape(theta_) || grad.size() != theta_.size()) {
      throw UsageError("free-parameter model: upstream gradient shape");
    }
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += upstream[i];
  }

  std::vector<T> backward(const Grid<T>& input, const Grid<T>& upstream) const {
    forward(input);
    std::vector<T> grad(theta_.size(), T{0});
    backward(Tape{}, upstream, grad);
    return grad;
  }

 private:
  Grid<T> theta_;
};

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(AdamSettings s, std::size_t n) : s_(s), m_(n, T{0}), v_(n, T{0}) {}

  std::size_t steps() const noexcept { return t_; }
  const std::vector<T>& first_moment() const noexcept { return m_; }
  const std::vector<T>& second_moment() const noexcept { return v_; }

  void step(std::span<T> params, std::span<const T> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(s_.beta1), b2 = static_cast<T>(s_.beta2);
    const T lr1 = static_cast<T>(s_.learning_rate / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(s_.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (T{1} - b1) * grad[i];
      v_[i] = b2 * v_[i] + (T{1} - b2) * grad[i] * grad[i];
      params[i] -= lr1 * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
    }
  }

 private:
  AdamSettings s_;
  std::vector<T> m_, v_;
  std::size_t t_ = 0;
};

struct TrainingPair {
  Sinogram input;   // noisy counts
  Sinogram target;  // clean counts
  std::size_t index = 0;
};

inline void validate(const TrainingPair& p) {
  if (p.input.domain != SinogramDomain::counts || p.target.domain != SinogramDomain::counts) {
    throw UsageError("training pair must be counts-domain");
  }
  require_same_shape(p.input.values, p.target.values, "training pair");
}

struct TrainHyper {
  AdamSettings adam;
  std::size_t batch_size = 8;
  std::size_t patch_size = 64;  // 0: whole sample
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 100;
  std::uint64_t seed = 0;
  // Counts are divided by this before the network and multiplied after.
  double input_scale = 1.0;
  double divergence_factor = 1e3;
};

inline void validate(const TrainHyper& h) {
  if (!(h.adam.learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  if (h.batch_size == 0 || h.epochs == 0 || h.steps_per_epoch == 0) {
    throw ValidationError("batch_size, epochs and steps_per_epoch must be >= 1");
  }
  if (!(h.input_scale > 0.0)) throw ValidationError("input_scale must be > 0");
}

template <typename Model>
struct TrainState {
  using T = typename Model::scalar_type;
  Model model;
  Adam<T> optimizer;
  std::size_t step = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;          // mean batch loss per epoch
  std::vector<std::size_t> history_steps;    // step count at the end of each epoch
};

namespace detail {

template <typename T>
Grid<T> scaled_patch(const Grid<double>& g, std::size_t r0, std::size_t c0, std::size_t h,
                     std::size_t w, double inv_scale) {
  Grid<T> out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const double* src = g.row(r0 + r) + c0;
    T* dst = out.row(r);
    for (std::size_t c = 0; c < w; ++c) dst[c] = static_cast<T>(src[c] * inv_scale);
  }
  return out;
}

}  // namespace detail

// Minimizes sum_k L[X_k, Y_k, g(Y_k)] with Adam over random patches. Each
// step draws `batch_size` (pair, row, col) triples from one seeded stream.
// With patch_size 0 and batch_size >= pairs.size(), every step uses every
// pair in order (deterministic full-batch descent).
template <typename Model>
TrainState<Model> train(Model model, const std::vector<TrainingPair>& pairs,
                        const LossConfig& cfg, const TrainHyper& hyper) {
  using T = typename Model::scalar_type;
  if (pairs.empty()) throw ValidationError("train: need at least one training pair");
  for (const auto& p : pairs) validate(p);
  validate(cfg);
  validate(hyper);
  const std::size_t rows = pairs.front().input.n_views();
  const std::size_t cols = pairs.front().input.n_channels();
  for (const auto& p : pairs) {
    if (p.input.n_views() != rows || p.input.n_channels() != cols) {
      throw UsageError("train: all pairs must share one shape");
    }
  }
  if (cfg.weights) require_same_shape(pairs.front().input.values, *cfg.weights, "train weights");

  const std::size_t ph = hyper.patch_size == 0 ? rows : std::min(hyper.patch_size, rows);
  const std::size_t pw = hyper.patch_size == 0 ? cols : std::min(hyper.patch_size, cols);
  const bool full_batch = ph == rows && pw == cols && hyper.batch_size >= pairs.size();
  const std::size_t per_step = full_batch ? pairs.size() : hyper.batch_size;
  const double inv_scale = 1.0 / hyper.input_scale;

  TrainState<Model> state{std::move(model), {}, 0, hyper.seed, {}, {}};
  state.optimizer = Adam<T>(hyper.adam, state.model.parameter_count());
  Rng rng(hyper.seed);
  std::vector<T> grad(state.model.parameter_count());
  typename Model::Tape tape;
  LossConfig patch_cfg = cfg;
  double initial = -1.0;

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < hyper.steps_per_epoch; ++s) {
      std::fill(grad.begin(), grad.end(), T{0});
      double step_loss = 0.0;
      for (std::size_t b = 0; b < per_step; ++b) {
        std::size_t k = b, r0 = 0, c0 = 0;
        if (!full_batch) {
          k = rng.below(pairs.size());
          r0 = rng.below(rows - ph + 1);
          c0 = rng.below(cols - pw + 1);
        }
        const auto& pair = pairs[k];
        const Grid<T> y = detail::scaled_patch<T>(pair.input.values, r0, c0, ph, pw, inv_scale);
        const Grid<double> x =
            detail::scaled_patch<double>(pair.target.values, r0, c0, ph, pw, inv_scale);
        const Grid<T> out = state.model.forward(y, tape);
        if (cfg.weights) patch_cfg.weights = cfg.weights->crop(r0, c0, ph, pw);
        const LossValue lv =
            composite_loss(x, y.template cast<double>(), out.template cast<double>(), patch_cfg);
        step_loss += lv.value;
        state.model.backward(tape, lv.gradient_wrt_output.template cast<T>(), grad);
      }
      if (initial < 0.0) initial = step_loss;
      const bool diverged = !std::isfinite(step_loss) ||
                            (initial > 0.0 && step_loss > hyper.divergence_factor * initial);
      if (diverged) {
        auto history = state.loss_history;
        history.push_back(step_loss);
        throw TrainingError("training diverged at step " + std::to_string(state.step) +
                                " (loss " + std::to_string(step_loss) + ", initial " +
                                std::to_string(initial) + ")",
                            std::move(history));
      }
      state.optimizer.step(state.model.parameters(), grad);
      ++state.step;
      epoch_loss += step_loss;
    }
    state.loss_history.push_back(epoch_loss / static_cast<double>(hyper.steps_per_epoch));
    state.history_steps.push_back(state.step);
  }
  return state;
}

// Sum of the loss over `pairs` at the model's current parameters, whole samples.
template <typename Model>
double evaluate_loss(const Model& model, const std::vector<TrainingPair>& pairs,
                     const LossConfig& cfg, double input_scale = 1.0) {
  using T = typename Model::scalar_type;
  double total = 0.0;
  for (const auto& p : pairs) {
    validate(p);
    const auto& v = p.input.values;
    const Grid<T> y = detail::scaled_patch<T>(v, 0, 0, v.rows(), v.cols(), 1.0 / input_scale);
    const Grid<double> x = detail::scaled_patch<double>(p.target.values, 0, 0, v.rows(),
                                                        v.cols(), 1.0 / input_scale);
    total += composite_loss(x, y.template cast<double>(),
                            model.forward(y).template cast<double>(), cfg)
                 .value;
  }
  return total;
}

struct TileSettings {
  std::size_t tile = 64;  // 0: no tiling
  std::size_t overlap = 16;
};

namespace detail {

struct TileSpan {
  std::size_t start, keep_lo, keep_hi;
};

// Tiles of length `tile` covering [0, n); each keeps its center, trimming
// overlap/2 at interior seams, and consecutive kept ranges are contiguous.
inline std::vector<TileSpan> tile_spans(std::size_t n, std::size_t tile, std::size_t overlap) {
  std::vector<TileSpan> spans;
  if (tile >= n) return {{0, 0, n}};
  const std::size_t stride = tile - overlap;
  const std::size_t margin = overlap / 2;
  std::size_t s = 0;
  for (;;) {
    spans.push_back({s, 0, 0});
    if (s + tile >= n) break;
    s = std::min(s + stride, n - tile);
  }
  for (std::size_t t = 0; t < spans.size(); ++t) {
    spans[t].keep_lo = t == 0 ? 0 : spans[t - 1].keep_hi;
    spans[t].keep_hi = t + 1 == spans.size() ? n : spans[t].start + tile - margin;
  }
  return spans;
}

}  // namespace detail

// Whole-sinogram denoising: scale * g(counts / scale), tiled with center-crop
// stitching. Tiling is exact whenever overlap/2 covers the receptive-field
// radius (5 pixels for the default five-layer network).
template <typename Model>
Sinogram infer(const Model& model, const Sinogram& sino, double input_scale = 1.0,
               TileSettings tiles = {}) {
  using T = typename Model::scalar_type;
  if (sino.domain != SinogramDomain::counts) throw UsageError("infer: expected counts sinogram");
  if (!(input_scale > 0.0)) throw ValidationError("infer: input_scale must be > 0");
  if (tiles.tile != 0 && (tiles.overlap >= tiles.tile || tiles.tile < 16)) {
    throw ValidationError("infer: need 16 <= tile and overlap < tile");
  }
  const auto& v = sino.values;
  const std::size_t rows = v.rows(), cols = v.cols();
  const double inv = 1.0 / input_scale;
  Sinogram out = sino;
  const std::size_t tile = tiles.tile == 0 ? std::max(rows, cols) : tiles.tile;
  const auto rspans = detail::tile_spans(rows, tile, tiles.overlap);
  const auto cspans = detail::tile_spans(cols, tile, tiles.overlap);
  for (const auto& rs : rspans) {
    const std::size_t th = std::min(tile, rows);
    for (const auto& cs : cspans) {
      const std::size_t tw = std::min(tile, cols);
      const Grid<T> in = detail::scaled_patch<T>(v, rs.start, cs.start, th, tw, inv);
      const Grid<T> g = model.forward(in);
      for (std::size_t r = rs.keep_lo; r < rs.keep_hi; ++r) {
        for (std::size_t c = cs.keep_lo; c < cs.keep_hi; ++c) {
          out.values(r, c) =
              static_cast<double>(g(r - rs.start, c - cs.start)) * input_scale;
        }
      }
    }
  }
  return out;
}

// Checkpoint: "dnz1 <n_layers>\n", then per layer "<out> <in> 3 3\n" followed
// by out*in*9 kernel taps ([out][in][ky][kx]) and out biases as
// little-endian float32.
template <typename T>
std::string encode_checkpoint(const ConvDenoiser<T>& model) {
  std::string out = "dnz1 " + std::to_string(model.n_layers()) + "\n";
  const auto& widths = model.architecture().widths;
  for (std::size_t l = 0; l < model.n_layers(); ++l) {
    out += std::to_string(widths[l + 1]) + " " + std::to_string(widths[l]) + " 3 3\n";
    for (T v : model.layer_weights(l)) detail::put_f32_le(out, static_cast<float>(v));
    for (T v : model.layer_bias(l)) detail::put_f32_le(out, static_cast<float>(v));
  }
  return out;
}

// The file carries weights only; residual connection and slope come from `arch`.
template <typename T>
ConvDenoiser<T> decode_checkpoint(const std::string& bytes, Architecture arch = {}) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw DataError("checkpoint: truncated header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  std::istringstream hs(next_line());
  std::string magic;
  std::size_t n_layers = 0;
  hs >> magic >> n_layers;
  if (magic != "dnz1" || !hs || n_layers == 0) throw DataError("checkpoint: bad header");

  struct Block {
    std::size_t out, in;
    std::size_t offset;
  };
  std::vector<Block> blocks;
  std::vector<std::size_t> widths;
  for (std::size_t l = 0; l < n_layers; ++l) {
    std::istringstream ls(next_line());
    std::size_t o = 0, i = 0, kh = 0, kw = 0;
    ls >> o >> i >> kh >> kw;
    if (!ls || kh != 3 || kw != 3 || o == 0 || i == 0) {
      throw DataError("checkpoint: bad layer shape line");
    }
    if (l == 0) widths.push_back(i);
    else if (widths.back() != i) throw DataError("checkpoint: layer widths do not chain");
    widths.push_back(o);
    const std::size_t n_bytes = 4 * (o * i * 9 + o);
    if (pos + n_bytes > bytes.size()) throw DataError("checkpoint: truncated payload");
    blocks.push_back({o, i, pos});
    pos += n_bytes;
  }
  if (pos != bytes.size()) throw DataError("checkpoint: trailing bytes");
  arch.widths = widths;
  ConvDenoiser<T> model(arch);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + blocks[l].offset);
    for (auto& v : model.layer_weights(l)) {
      v = static_cast<T>(detail::get_f32_le(p));
      p += 4;
    }
    for (auto& v : model.layer_bias(l)) {
      v = static_cast<T>(detail::get_f32_le(p));
      p += 4;
    }
  }
  return model;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ConvDenoiser<T>& model) {
  detail::write_file_atomic(path, encode_checkpoint(model));
}

template <typename T = float>
ConvDenoiser<T> load_checkpoint(const std::filesystem::path& path, Architecture arch = {}) {
  return decode_checkpoint<T>(detail::read_file(path), std::move(arch));
}

inline std::string loss_history_csv(const std::vector<std::size_t>& steps,
                                    const std::vector<double>& losses) {
  std::ostringstream os;
  os.precision(17);
  os << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) os << steps[i] << "," << losses[i] << "\n";
  return os.str();
}

}  // namespace specloss
