#pragma once

// End-to-end alpha sweep: phantoms -> noisy sinograms -> one trained denoiser
// per alpha -> held-out inference -> FBP -> NPS entropy report. Every stage
// reads its inputs from and writes its outputs to the output directory, so
// stages can be rerun individually and the report is reproducible from disk.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "specloss/denoiser.hpp"
#include "specloss/error.hpp"
#include "specloss/fbp.hpp"
#include "specloss/filters.hpp"
#include "specloss/loss.hpp"
#include "specloss/nps.hpp"
#include "specloss/phantom.hpp"
#include "specloss/rfl1.hpp"
#include "specloss/rng.hpp"

namespace specloss {

struct ExperimentConfig {
  // required
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;

  // phantoms: a body ellipse plus seeded inserts on a ring around it
  std::size_t grid_size = 256;
  double pixel_pitch_mm = 1.0;
  double body_semi_a = 0.75;
  double body_semi_b = 0.6;
  double body_attenuation = 0.02;  // per mm
  std::size_t n_inserts = 5;
  std::size_t n_phantoms = 8;
  std::size_t n_train_phantoms = 6;  // the rest are held out

  // geometry and noise
  std::size_t n_views = 360;
  std::size_t n_channels = 384;
  double i0 = 1e4;
  double sigma_e = 5.0;
  double count_floor = 0.5;
  std::size_t train_realizations = 2;

  // loss
  double f1_cutoff = 0.4;
  double f2_cutoff = 0.15;
  std::size_t n_taps = 65;
  Axes loss_axes = Axes::cols;
  Phi phi = Phi::squared;
  std::vector<double> alpha_list{0.0, 0.6, 0.8};

  // network and optimizer
  bool residual = true;
  double correction_scale = 0.0;  // 0: 1 / sqrt(i0)
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t batch_size = 8;
  std::size_t patch_size = 64;
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 100;
  std::size_t tile = 64;
  std::size_t tile_overlap = 16;

  // reconstruction and metrics
  Apodization apodization = Apodization::none;
  std::size_t ensemble = 16;  // noise realizations per held-out phantom
  std::size_t roi_center_row = 128;
  std::size_t roi_center_col = 128;
  std::size_t roi_width = 64;
  std::size_t roi_height = 64;
  std::size_t nps_bins = 256;
  std::size_t metric_patch = 128;

  std::size_t n_heldout() const noexcept { return n_phantoms - n_train_phantoms; }
  double effective_correction_scale() const {
    return correction_scale > 0.0 ? correction_scale : 1.0 / std::sqrt(i0);
  }
};

// Per-stage seed streams: derive_seed(master, stage, index).
enum class SeedStage : std::uint64_t {
  phantom = 1,        // index: phantom number
  train_noise = 2,    // index: phantom * train_realizations + realization
  heldout_noise = 3,  // index: held-out phantom * ensemble + realization
  model_init = 4,
  batches = 5,
};

inline std::uint64_t stage_seed(const ExperimentConfig& cfg, SeedStage s, std::uint64_t index = 0) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(s), index);
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline double parse_double(const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument("expected a number, got '" + v + "'");
  return d;
}

inline std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

inline double positive(double d) {
  if (!(d > 0.0)) throw std::invalid_argument("must be > 0");
  return d;
}

inline double non_negative(double d) {
  if (!(d >= 0.0)) throw std::invalid_argument("must be >= 0");
  return d;
}

inline std::size_t at_least(std::uint64_t v, std::uint64_t lo) {
  if (v < lo) throw std::invalid_argument("must be >= " + std::to_string(lo));
  return static_cast<std::size_t>(v);
}

inline double cutoff(double d) {
  if (!(d > 0.0 && d < 0.5)) throw std::invalid_argument("must lie in (0, 0.5)");
  return d;
}

inline std::vector<double> parse_alpha_list(const std::string& v) {
  std::vector<double> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    const double a = parse_double(trim(item));
    if (a < 0.0) throw std::invalid_argument("alpha values must be >= 0");
    out.push_back(a);
  }
  if (out.empty()) throw std::invalid_argument("alpha_list must not be empty");
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& config_setters() {
  using C = ExperimentConfig;
  using S = const std::string&;
  static const std::map<std::string, Setter> m{
      {"seed", [](C& c, S v) { c.seed = parse_u64(v); }},
      {"output_dir", [](C& c, S v) {
         if (v.empty()) throw std::invalid_argument("must not be empty");
         c.output_dir = v;
       }},
      {"grid_size", [](C& c, S v) { c.grid_size = at_least(parse_u64(v), 16); }},
      {"pixel_pitch_mm", [](C& c, S v) { c.pixel_pitch_mm = positive(parse_double(v)); }},
      {"body_semi_a", [](C& c, S v) { c.body_semi_a = positive(parse_double(v)); }},
      {"body_semi_b", [](C& c, S v) { c.body_semi_b = positive(parse_double(v)); }},
      {"body_attenuation", [](C& c, S v) { c.body_attenuation = non_negative(parse_double(v)); }},
      {"n_inserts", [](C& c, S v) { c.n_inserts = at_least(parse_u64(v), 0); }},
      {"n_phantoms", [](C& c, S v) { c.n_phantoms = at_least(parse_u64(v), 2); }},
      {"n_train_phantoms", [](C& c, S v) { c.n_train_phantoms = at_least(parse_u64(v), 1); }},
      {"n_views", [](C& c, S v) { c.n_views = at_least(parse_u64(v), 16); }},
      {"n_channels", [](C& c, S v) { c.n_channels = at_least(parse_u64(v), 16); }},
      {"i0", [](C& c, S v) { c.i0 = positive(parse_double(v)); }},
      {"sigma_e", [](C& c, S v) { c.sigma_e = non_negative(parse_double(v)); }},
      {"count_floor", [](C& c, S v) { c.count_floor = positive(parse_double(v)); }},
      {"train_realizations", [](C& c, S v) { c.train_realizations = at_least(parse_u64(v), 1); }},
      {"f1_cutoff", [](C& c, S v) { c.f1_cutoff = cutoff(parse_double(v)); }},
      {"f2_cutoff", [](C& c, S v) { c.f2_cutoff = cutoff(parse_double(v)); }},
      {"n_taps", [](C& c, S v) {
         c.n_taps = at_least(parse_u64(v), 5);
         if (c.n_taps % 2 == 0) throw std::invalid_argument("must be odd");
       }},
      {"loss_axes", [](C& c, S v) {
         try {
           c.loss_axes = axes_from_string(v);
         } catch (const Error& e) {
           throw std::invalid_argument(e.what());
         }
         if (c.loss_axes == Axes::none) throw std::invalid_argument("must name at least one axis");
       }},
      {"phi", [](C& c, S v) {
         try {
           c.phi = phi_from_string(v);
         } catch (const Error& e) {
           throw std::invalid_argument(e.what());
         }
       }},
      {"alpha_list", [](C& c, S v) { c.alpha_list = parse_alpha_list(v); }},
      {"residual", [](C& c, S v) { c.residual = parse_bool(v); }},
      {"correction_scale", [](C& c, S v) { c.correction_scale = non_negative(parse_double(v)); }},
      {"learning_rate", [](C& c, S v) { c.learning_rate = positive(parse_double(v)); }},
      {"beta1", [](C& c, S v) {
         c.beta1 = non_negative(parse_double(v));
         if (c.beta1 >= 1.0) throw std::invalid_argument("must be < 1");
       }},
      {"beta2", [](C& c, S v) {
         c.beta2 = non_negative(parse_double(v));
         if (c.beta2 >= 1.0) throw std::invalid_argument("must be < 1");
       }},
      {"batch_size", [](C& c, S v) { c.batch_size = at_least(parse_u64(v), 1); }},
      {"patch_size", [](C& c, S v) {
         c.patch_size = static_cast<std::size_t>(parse_u64(v));
         if (c.patch_size != 0 && c.patch_size < 16) throw std::invalid_argument("must be 0 or >= 16");
       }},
      {"epochs", [](C& c, S v) { c.epochs = at_least(parse_u64(v), 1); }},
      {"steps_per_epoch", [](C& c, S v) { c.steps_per_epoch = at_least(parse_u64(v), 1); }},
      {"tile", [](C& c, S v) {
         c.tile = static_cast<std::size_t>(parse_u64(v));
         if (c.tile != 0 && c.tile < 16) throw std::invalid_argument("must be 0 or >= 16");
       }},
      {"tile_overlap", [](C& c, S v) { c.tile_overlap = static_cast<std::size_t>(parse_u64(v)); }},
      {"apodization", [](C& c, S v) {
         try {
           c.apodization = apodization_from_string(v);
         } catch (const Error& e) {
           throw std::invalid_argument(e.what());
         }
       }},
      {"ensemble", [](C& c, S v) { c.ensemble = at_least(parse_u64(v), 2); }},
      {"roi_center_row", [](C& c, S v) { c.roi_center_row = static_cast<std::size_t>(parse_u64(v)); }},
      {"roi_center_col", [](C& c, S v) { c.roi_center_col = static_cast<std::size_t>(parse_u64(v)); }},
      {"roi_width", [](C& c, S v) { c.roi_width = at_least(parse_u64(v), 2); }},
      {"roi_height", [](C& c, S v) { c.roi_height = at_least(parse_u64(v), 2); }},
      {"nps_bins", [](C& c, S v) { c.nps_bins = at_least(parse_u64(v), 1); }},
      {"metric_patch", [](C& c, S v) { c.metric_patch = at_least(parse_u64(v), 16); }},
  };
  return m;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int p = 1; p <= 17; ++p) {
    char s[32];
    std::snprintf(s, sizeof s, "%.*g", p, v);
    if (std::strtod(s, nullptr) == v) return s;
  }
  return buf;
}

}  // namespace detail

// Checks relations between keys. `line_of` maps a key to the line that set
// it (0 when defaulted); failures become ParseErrors on that line.
inline void validate(const ExperimentConfig& c,
                     const std::map<std::string, std::size_t>& line_of = {}) {
  auto fail = [&](const std::string& key, const std::string& what) {
    const auto it = line_of.find(key);
    throw ParseError(it == line_of.end() ? 0 : it->second, key + ": " + what);
  };
  if (c.output_dir.empty()) fail("output_dir", "required key is missing");
  if (c.n_train_phantoms >= c.n_phantoms) fail("n_train_phantoms", "must be < n_phantoms");
  if (c.alpha_list.empty()) fail("alpha_list", "must not be empty");
  if (c.tile != 0 && c.tile_overlap >= c.tile) fail("tile_overlap", "must be < tile");
  if (c.patch_size > c.n_views || c.patch_size > c.n_channels) {
    fail("patch_size", "exceeds the sinogram size");
  }
  const std::size_t half = c.n_taps / 2;
  if (c.patch_size != 0 && c.patch_size <= half) fail("n_taps", "filter is wider than a training patch");
  if (c.metric_patch > c.n_views || c.metric_patch > c.n_channels) {
    fail("metric_patch", "exceeds the sinogram size");
  }
  if (c.roi_center_row < c.roi_height / 2 || c.roi_center_col < c.roi_width / 2 ||
      c.roi_center_row - c.roi_height / 2 + c.roi_height > c.grid_size ||
      c.roi_center_col - c.roi_width / 2 + c.roi_width > c.grid_size) {
    fail("roi_center_row", "ROI lies outside the reconstructed image");
  }
}

// `key = value` lines; `#` starts a comment. seed and output_dir are required.
inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> line_of;
  const auto& setters = detail::config_setters();
  std::istringstream is(text);
  std::string raw;
  std::size_t n = 0;
  while (std::getline(is, raw)) {
    ++n;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(n, "expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ParseError(n, "unknown key '" + key + "'");
    if (line_of.count(key)) throw ParseError(n, "duplicate key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ParseError(n, key + ": " + e.what());
    }
    line_of[key] = n;
  }
  for (const char* req : {"seed", "output_dir"}) {
    if (!line_of.count(req)) throw ParseError(n, std::string("missing required key '") + req + "'");
  }
  validate(cfg, line_of);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(detail::read_file(path));
}

// Every key with its resolved value; parse_config(to_text(c)) reproduces c.
inline std::string to_text(const ExperimentConfig& c) {
  using detail::format_number;
  std::ostringstream os;
  auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << "\n"; };
  auto u = [](std::size_t v) { return std::to_string(v); };
  kv("seed", std::to_string(c.seed));
  kv("output_dir", c.output_dir.string());
  kv("grid_size", u(c.grid_size));
  kv("pixel_pitch_mm", format_number(c.pixel_pitch_mm));
  kv("body_semi_a", format_number(c.body_semi_a));
  kv("body_semi_b", format_number(c.body_semi_b));
  kv("body_attenuation", format_number(c.body_attenuation));
  kv("n_inserts", u(c.n_inserts));
  kv("n_phantoms", u(c.n_phantoms));
  kv("n_train_phantoms", u(c.n_train_phantoms));
  kv("n_views", u(c.n_views));
  kv("n_channels", u(c.n_channels));
  kv("i0", format_number(c.i0));
  kv("sigma_e", format_number(c.sigma_e));
  kv("count_floor", format_number(c.count_floor));
  kv("train_realizations", u(c.train_realizations));
  kv("f1_cutoff", format_number(c.f1_cutoff));
  kv("f2_cutoff", format_number(c.f2_cutoff));
  kv("n_taps", u(c.n_taps));
  kv("loss_axes", to_string(c.loss_axes));
  kv("phi", to_string(c.phi));
  std::string alphas;
  for (std::size_t i = 0; i < c.alpha_list.size(); ++i) {
    alphas += (i ? ", " : "") + format_number(c.alpha_list[i]);
  }
  kv("alpha_list", alphas);
  kv("residual", c.residual ? "true" : "false");
  kv("correction_scale", format_number(c.correction_scale));
  kv("learning_rate", format_number(c.learning_rate));
  kv("beta1", format_number(c.beta1));
  kv("beta2", format_number(c.beta2));
  kv("batch_size", u(c.batch_size));
  kv("patch_size", u(c.patch_size));
  kv("epochs", u(c.epochs));
  kv("steps_per_epoch", u(c.steps_per_epoch));
  kv("tile", u(c.tile));
  kv("tile_overlap", u(c.tile_overlap));
  kv("apodization", to_string(c.apodization));
  kv("ensemble", u(c.ensemble));
  kv("roi_center_row", u(c.roi_center_row));
  kv("roi_center_col", u(c.roi_center_col));
  kv("roi_width", u(c.roi_width));
  kv("roi_height", u(c.roi_height));
  kv("nps_bins", u(c.nps_bins));
  kv("metric_patch", u(c.metric_patch));
  return os.str();
}

// ---------------------------------------------------------------------------
// Derived settings

inline Phantom phantom_variant(const ExperimentConfig& c, std::size_t k) {
  Rng rng(stage_seed(c, SeedStage::phantom, k));
  Phantom p;
  p.grid_size = c.grid_size;
  p.pixel_pitch_mm = c.pixel_pitch_mm;
  p.ellipses.push_back({0.0, 0.0, c.body_semi_a, c.body_semi_b, 0.0, c.body_attenuation});
  // Inserts sit on a ring inside the body, leaving the center uniform for the ROI.
  for (std::size_t i = 0; i < c.n_inserts; ++i) {
    const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double rad = rng.uniform(0.6, 0.75);
    Ellipse e;
    e.center_x = rad * c.body_semi_a * std::cos(ang);
    e.center_y = rad * c.body_semi_b * std::sin(ang);
    e.semi_a = rng.uniform(0.04, 0.1);
    e.semi_b = rng.uniform(0.04, 0.1);
    e.rotation_rad = rng.uniform(0.0, std::numbers::pi);
    e.attenuation_per_mm = rng.uniform(0.1, 1.0) * c.body_attenuation;
    p.ellipses.push_back(e);
  }
  return p;
}

inline LossConfig loss_config(const ExperimentConfig& c, double alpha) {
  LossConfig l;
  l.f1 = design_fir(FilterRole::f1_lowpass, c.f1_cutoff, c.n_taps);
  l.f2 = design_fir(FilterRole::f2_highpass, c.f2_cutoff, c.n_taps);
  l.alpha = alpha;
  l.phi = c.phi;
  l.axes = c.loss_axes;
  return l;
}

inline Architecture architecture(const ExperimentConfig& c) {
  Architecture a;
  a.residual = c.residual;
  a.correction_scale = c.effective_correction_scale();
  return a;
}

inline TrainHyper train_hyper(const ExperimentConfig& c) {
  TrainHyper h;
  h.adam.learning_rate = c.learning_rate;
  h.adam.beta1 = c.beta1;
  h.adam.beta2 = c.beta2;
  h.batch_size = c.batch_size;
  h.patch_size = c.patch_size;
  h.epochs = c.epochs;
  h.steps_per_epoch = c.steps_per_epoch;
  h.seed = stage_seed(c, SeedStage::batches);
  h.input_scale = c.i0;
  return h;
}

inline ReconConfig recon_config(const ExperimentConfig& c) {
  ReconConfig r;
  r.grid_size = c.grid_size;
  r.pixel_pitch_mm = c.pixel_pitch_mm;
  r.apodization = c.apodization;
  r.i0 = c.i0;
  r.floor = c.count_floor;
  return r;
}

inline RoiSpec roi_spec(const ExperimentConfig& c) {
  return {c.roi_center_row, c.roi_center_col, c.roi_width, c.roi_height, c.ensemble};
}

// ---------------------------------------------------------------------------
// Artifact layout

struct ArtifactPaths {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.txt"; }
  std::filesystem::path phantoms() const { return root / "phantoms.rfl1"; }
  std::filesystem::path clean() const { return root / "clean_counts.rfl1"; }
  std::filesystem::path train_noisy() const { return root / "train_noisy_counts.rfl1"; }
  std::filesystem::path heldout_noisy() const { return root / "heldout_noisy_counts.rfl1"; }
  std::filesystem::path f1() const { return root / "f1.csv"; }
  std::filesystem::path f2() const { return root / "f2.csv"; }
  std::filesystem::path report() const { return root / "report.csv"; }
  std::filesystem::path uncorrected_dir() const { return root / "uncorrected"; }
  std::filesystem::path alpha_dir(double alpha) const {
    return root / ("alpha_" + detail::format_number(alpha));
  }
  // Within a run directory:
  static std::filesystem::path model(const std::filesystem::path& d) { return d / "model.dnz1"; }
  static std::filesystem::path history(const std::filesystem::path& d) { return d / "loss_history.csv"; }
  static std::filesystem::path denoised(const std::filesystem::path& d) { return d / "denoised_counts.rfl1"; }
  static std::filesystem::path recon(const std::filesystem::path& d) { return d / "recon.rfl1"; }
  static std::filesystem::path nps(const std::filesystem::path& d) { return d / "nps.csv"; }
};

namespace detail {

inline Sinogram counts_sinogram(const ExperimentConfig& c, Grid<double> values) {
  Sinogram s;
  s.values = std::move(values);
  s.domain = SinogramDomain::counts;
  s.view_angles = uniform_view_angles(c.n_views);
  s.channel_pitch_mm = c.pixel_pitch_mm;
  return s;
}

inline std::vector<Grid<double>> read_frames(const std::filesystem::path& p, std::size_t expect,
                                             const std::string& what) {
  auto frames = read_rfl1(p);
  if (frames.size() != expect) {
    throw DataError(p.string() + ": expected " + std::to_string(expect) + " " + what + " frames, found " +
                    std::to_string(frames.size()));
  }
  return frames;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  write_file_atomic(p, text);
}

// Top-left corners of non-overlapping size x size patches inside a margin
// that keeps the loss filters' boundary handling out of the metrics.
inline std::vector<std::pair<std::size_t, std::size_t>> interior_patches(std::size_t rows,
                                                                         std::size_t cols,
                                                                         std::size_t size,
                                                                         std::size_t margin) {
  auto starts = [&](std::size_t n) {
    std::vector<std::size_t> s;
    const std::size_t m = n >= size + 2 * margin ? margin : (n - size) / 2;
    const std::size_t avail = n - 2 * m;
    const std::size_t count = avail / size;
    const std::size_t lead = m + (avail - count * size) / 2;
    for (std::size_t i = 0; i < count; ++i) s.push_back(lead + i * size);
    return s;
  };
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (auto r : starts(rows)) {
    for (auto c : starts(cols)) out.emplace_back(r, c);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline void stage_phantom(const ExperimentConfig& c) {
  const ArtifactPaths a{c.output_dir};
  std::filesystem::create_directories(a.root);
  detail::write_file_atomic(a.config(), to_text(c));
  std::vector<Grid<double>> frames;
  for (std::size_t k = 0; k < c.n_phantoms; ++k) frames.push_back(generate_phantom(phantom_variant(c, k)).pixels);
  write_rfl1(a.phantoms(), frames);
}

// Clean counts for every phantom, `train_realizations` noisy copies of each
// training phantom and `ensemble` noisy copies of each held-out phantom.
inline void stage_simulate(const ExperimentConfig& c) {
  const ArtifactPaths a{c.output_dir};
  const auto phantoms = detail::read_frames(a.phantoms(), c.n_phantoms, "phantom");
  std::vector<Grid<double>> clean, train, heldout;
  for (std::size_t k = 0; k < c.n_phantoms; ++k) {
    ImageGrid img{phantoms[k], c.pixel_pitch_mm};
    const Sinogram counts = attenuation_to_counts(radon_forward(img, c.n_views, c.n_channels), c.i0);
    clean.push_back(counts.values);
    const bool is_train = k < c.n_train_phantoms;
    const std::size_t n_real = is_train ? c.train_realizations : c.ensemble;
    const std::size_t base = is_train ? k : k - c.n_train_phantoms;
    for (std::size_t r = 0; r < n_real; ++r) {
      NoiseSpec ns;
      ns.i0 = c.i0;
      ns.sigma_e = c.sigma_e;
      ns.floor = c.count_floor;
      ns.seed = stage_seed(c, is_train ? SeedStage::train_noise : SeedStage::heldout_noise,
                           base * n_real + r);
      (is_train ? train : heldout).push_back(add_noise(counts, ns).values);
    }
  }
  write_rfl1(a.clean(), clean);
  write_rfl1(a.train_noisy(), train);
  write_rfl1(a.heldout_noisy(), heldout);
}

inline std::vector<TrainingPair> load_training_pairs(const ExperimentConfig& c) {
  const ArtifactPaths a{c.output_dir};
  auto clean = detail::read_frames(a.clean(), c.n_phantoms, "clean sinogram");
  auto noisy = detail::read_frames(a.train_noisy(), c.n_train_phantoms * c.train_realizations,
                                   "training sinogram");
  std::vector<TrainingPair> pairs;
  for (std::size_t k = 0; k < c.n_train_phantoms; ++k) {
    for (std::size_t r = 0; r < c.train_realizations; ++r) {
      pairs.push_back({detail::counts_sinogram(c, noisy[k * c.train_realizations + r]),
                       detail::counts_sinogram(c, clean[k]), k});
    }
  }
  return pairs;
}

// One model per alpha, all from the same initial weights and batch stream.
inline void stage_train(const ExperimentConfig& c) {
  const ArtifactPaths a{c.output_dir};
  const auto pairs = load_training_pairs(c);
  write_filter_csv(a.f1(), design_fir(FilterRole::f1_lowpass, c.f1_cutoff, c.n_taps));
  write_filter_csv(a.f2(), design_fir(FilterRole::f2_highpass, c.f2_cutoff, c.n_taps));
  const auto init = ConvDenoiser<float>::initialized(architecture(c), stage_seed(c, SeedStage::model_init));
  for (double alpha : c.alpha_list) {
    const auto dir = a.alpha_dir(alpha);
    std::filesystem::create_directories(dir);
    const auto st = train(init, pairs, loss_config(c, alpha), train_hyper(c));
    save_checkpoint(ArtifactPaths::model(dir), st.model);
    detail::write_file_atomic(ArtifactPaths::history(dir), loss_history_csv(st.history_steps, st.loss_history));
  }
}

inline void stage_infer(const ExperimentConfig& c) {
  const ArtifactPaths a{c.output_dir};
  const auto noisy = detail::read_frames(a.heldout_noisy(), c.n_heldout() * c.ensemble, "held-out sinogram");
  for (double alpha : c.alpha_list) {
    const auto dir = a.alpha_dir(alpha);
    const auto model = load_checkpoint<float>(ArtifactPaths::model(dir), architecture(c));
    std::vector<Grid<double>> out;
    for (const auto& y : noisy) {
      out.push_back(infer(model, detail::counts_sinogram(c, y), c.i0, {c.tile, c.tile_overlap}).values);
    }
    write_rfl1(ArtifactPaths::denoised(dir), out);
  }
}

namespace detail {

// FBP of the first held-out phantom's `ensemble` realizations.
inline void reconstruct_into(const ExperimentConfig& c, const std::vector<Grid<double>>& sinos,
                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto rc = recon_config(c);
  std::vector<Grid<double>> images;
  for (std::size_t e = 0; e < c.ensemble; ++e) {
    const Sinogram p = counts_to_line_integrals(counts_sinogram(c, sinos[e]), c.i0, c.count_floor);
    images.push_back(fbp(p, rc).pixels);
  }
  write_rfl1(ArtifactPaths::recon(dir), images);
}

inline std::vector<std::filesystem::path> run_dirs(const ExperimentConfig& c) {
  const ArtifactPaths a{c.output_dir};
  std::vector<std::filesystem::path> dirs{a.uncorrected_dir()};
  for (double alpha : c.alpha_list) dirs.push_back(a.alpha_dir(alpha));
  return dirs;
}

}  // namespace detail

inline void stage_recon(const ExperimentConfig& c) {
  const ArtifactPaths a{c.output_dir};
  const std::size_t n = c.n_heldout() * c.ensemble;
  detail::reconstruct_into(c, detail::read_frames(a.heldout_noisy(), n, "held-out sinogram"),
                           a.uncorrected_dir());
  for (double alpha : c.alpha_list) {
    const auto dir = a.alpha_dir(alpha);
    detail::reconstruct_into(c, detail::read_frames(ArtifactPaths::denoised(dir), n, "denoised sinogram"), dir);
  }
}

inline void stage_nps(const ExperimentConfig& c) {
  const auto roi = roi_spec(c);
  NpsOptions opt;
  opt.n_bins = c.nps_bins;
  for (const auto& dir : detail::run_dirs(c)) {
    const auto images = detail::read_frames(ArtifactPaths::recon(dir), c.ensemble, "reconstruction");
    const auto curve = normalize_nps(estimate_nps(images, roi, opt));
    detail::write_file_atomic(ArtifactPaths::nps(dir), nps_to_csv(curve, roi));
  }
}

struct ReportRow {
  std::optional<double> alpha;  // empty: the uncorrected baseline
  double entropy_bits = 0.0;
  double inband_residual_ratio = 0.0;
  double highband_preservation_ratio = 0.0;
  std::optional<double> final_loss;
};

inline const char* report_header() {
  return "alpha,entropy_bits,inband_residual_ratio,highband_preservation_ratio,final_loss";
}

// Rows in order, then the baseline labelled `uncorrected`.
inline std::string format_report(const std::vector<ReportRow>& rows, const ReportRow& baseline) {
  if (rows.empty()) throw UsageError("report: no rows");
  auto check = [](const ReportRow& r) {
    if (!(r.entropy_bits >= -1e-9 && r.entropy_bits <= 8.0 + 1e-9)) {
      throw MetricIntegrityError("report: entropy " + detail::format_number(r.entropy_bits) +
                                 " bits lies outside [0, 8]");
    }
  };
  std::string out = std::string(report_header()) + "\n";
  auto line = [](const std::string& label, const ReportRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,", r.entropy_bits, r.inband_residual_ratio,
                  r.highband_preservation_ratio);
    std::string s = label + buf;
    if (r.final_loss) {
      char l[40];
      std::snprintf(l, sizeof l, "%.9g", *r.final_loss);
      s += l;
    }
    return s + "\n";
  };
  for (const auto& r : rows) {
    check(r);
    if (!r.alpha) throw UsageError("report: sweep row without alpha");
    out += line(detail::format_number(*r.alpha), r);
  }
  check(baseline);
  out += line("uncorrected", baseline);
  return out;
}

inline void emit_report(const std::vector<ReportRow>& rows, const ReportRow& baseline,
                        const std::filesystem::path& path) {
  const std::string text = format_report(rows, baseline);
  if (!path.parent_path().empty() && !std::filesystem::is_directory(path.parent_path())) {
    throw IoError("report: directory " + path.parent_path().string() + " does not exist");
  }
  detail::write_file_atomic(path, text);
}

inline std::vector<std::pair<std::optional<double>, double>> read_report_entropies(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  if (line != report_header()) throw DataError("report: unexpected header '" + line + "'");
  std::vector<std::pair<std::optional<double>, double>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw DataError("report: malformed row");
    const std::string label = line.substr(0, c1);
    std::optional<double> alpha;
    if (label != "uncorrected") alpha = std::stod(label);
    out.emplace_back(alpha, std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  return out;
}

// Band energies summed over interior patches of every held-out sinogram.
struct BandMetrics {
  double inband_residual = 0.0;   // |X - g|^2 in [0, f1_cutoff]
  double inband_noise = 0.0;      // |X - Y|^2 in [0, f1_cutoff]
  double highband_residual = 0.0; // |X - g|^2 in [f2_cutoff, 0.5]
  double highband_noise = 0.0;    // |X - Y|^2 in [f2_cutoff, 0.5]
  double highband_change = 0.0;   // |g - Y|^2 in [f2_cutoff, 0.5]
};

inline BandMetrics band_metrics(const ExperimentConfig& c, const std::vector<Grid<double>>& clean,
                                const std::vector<Grid<double>>& noisy,
                                const std::vector<Grid<double>>& output) {
  BandMetrics m;
  const auto patches = detail::interior_patches(c.n_views, c.n_channels, c.metric_patch, c.n_taps / 2);
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    const Grid<double>& x = clean[c.n_train_phantoms + i / c.ensemble];
    const Grid<double> resid = x - output[i];
    const Grid<double> noise = x - noisy[i];
    const Grid<double> change = output[i] - noisy[i];
    for (const auto& [r0, c0] : patches) {
      auto crop = [&](const Grid<double>& g) { return g.crop(r0, c0, c.metric_patch, c.metric_patch); };
      const auto rp = crop(resid), np = crop(noise), cp = crop(change);
      m.inband_residual += band_energy(rp, 0.0, c.f1_cutoff);
      m.inband_noise += band_energy(np, 0.0, c.f1_cutoff);
      m.highband_residual += band_energy(rp, c.f2_cutoff, 0.5);
      m.highband_noise += band_energy(np, c.f2_cutoff, 0.5);
      m.highband_change += band_energy(cp, c.f2_cutoff, 0.5);
    }
  }
  return m;
}

// Band metrics of the model trained with `alpha`, from the saved artifacts.
inline BandMetrics band_metrics_for(const ExperimentConfig& c, double alpha) {
  const ArtifactPaths a{c.output_dir};
  const std::size_t n = c.n_heldout() * c.ensemble;
  return band_metrics(c, detail::read_frames(a.clean(), c.n_phantoms, "clean sinogram"),
                      detail::read_frames(a.heldout_noisy(), n, "held-out sinogram"),
                      detail::read_frames(ArtifactPaths::denoised(a.alpha_dir(alpha)), n, "denoised sinogram"));
}

inline double final_loss_from_history(const std::string& csv) {
  std::istringstream is(csv);
  std::string line, last;
  while (std::getline(is, line)) {
    if (!line.empty()) last = line;
  }
  const auto comma = last.find(',');
  if (comma == std::string::npos || last == "step,loss") throw DataError("loss history is empty");
  return std::stod(last.substr(comma + 1));
}

inline std::vector<ReportRow> stage_report(const ExperimentConfig& c) {
  const ArtifactPaths a{c.output_dir};
  const std::size_t n = c.n_heldout() * c.ensemble;
  const auto clean = detail::read_frames(a.clean(), c.n_phantoms, "clean sinogram");
  const auto noisy = detail::read_frames(a.heldout_noisy(), n, "held-out sinogram");
  auto entropy_of = [&](const std::filesystem::path& dir) {
    return entropy_flatness(nps_from_csv(detail::read_file(ArtifactPaths::nps(dir))));
  };

  std::vector<ReportRow> rows;
  for (double alpha : c.alpha_list) {
    const auto dir = a.alpha_dir(alpha);
    const auto out = detail::read_frames(ArtifactPaths::denoised(dir), n, "denoised sinogram");
    const BandMetrics m = band_metrics(c, clean, noisy, out);
    ReportRow r;
    r.alpha = alpha;
    r.entropy_bits = entropy_of(dir);
    r.inband_residual_ratio = m.inband_residual / m.inband_noise;
    r.highband_preservation_ratio = m.highband_residual / m.highband_noise;
    r.final_loss = final_loss_from_history(detail::read_file(ArtifactPaths::history(dir)));
    rows.push_back(r);
  }
  ReportRow base;
  base.entropy_bits = entropy_of(a.uncorrected_dir());
  base.inband_residual_ratio = 1.0;
  base.highband_preservation_ratio = 1.0;
  emit_report(rows, base, a.report());
  rows.push_back(base);
  return rows;
}

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"phantom", "simulate", "train", "infer",
                                              "recon",   "nps",      "report", "run-all"};
  return names;
}

// Runs one named stage (or all of them), tagging any failure with the stage.
inline void run_stage(const ExperimentConfig& c, const std::string& stage) {
  static const std::map<std::string, void (*)(const ExperimentConfig&)> table{
      {"phantom", stage_phantom}, {"simulate", stage_simulate}, {"train", stage_train},
      {"infer", stage_infer},     {"recon", stage_recon},       {"nps", stage_nps},
      {"report", [](const ExperimentConfig& x) { stage_report(x); }},
  };
  if (stage == "run-all") {
    for (const auto& s : stage_names()) {
      if (s != "run-all") run_stage(c, s);
    }
    return;
  }
  const auto it = table.find(stage);
  if (it == table.end()) throw UsageError("unknown stage '" + stage + "'");
  try {
    it->second(c);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline std::vector<ReportRow> run_experiment(const ExperimentConfig& c) {
  for (const auto& s : stage_names()) {
    if (s != "run-all" && s != "report") run_stage(c, s);
  }
  try {
    return stage_report(c);
  } catch (const std::exception& e) {
    throw StageError("report", e.what());
  }
}

}  // namespace specloss
