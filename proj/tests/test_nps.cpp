#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "specloss/nps.hpp"
#include "specloss/rng.hpp"

using namespace specloss;

namespace {

std::vector<Grid<double>> white_ensemble(std::size_t m, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Grid<double>> out;
  for (std::size_t k = 0; k < m; ++k) {
    Grid<double> g(n, n);
    for (auto& v : g.values()) v = rng.normal();
    out.push_back(std::move(g));
  }
  return out;
}

NpsCurve curve_of(std::vector<double> p, bool normalized = true) {
  NpsCurve c;
  c.power = std::move(p);
  c.frequency.resize(c.power.size());
  for (std::size_t i = 0; i < c.power.size(); ++i) c.frequency[i] = 0.5 * static_cast<double>(i) / c.power.size();
  c.normalized = normalized;
  return c;
}

}  // namespace

TEST(EstimateNps, IdenticalRealizationsGiveZeroCurve) {
  const auto one = white_ensemble(1, 64, 1).front();
  const auto c = estimate_nps({one, one, one}, {32, 32, 64, 64, 3});
  EXPECT_EQ(c.n_bins(), 256u);
  for (double p : c.power) EXPECT_NEAR(p, 0.0, 1e-20);
  EXPECT_THROW(normalize_nps(c), DegenerateInputError);
}

TEST(EstimateNps, WhiteNoiseEnsembleIsFlat) {
  const auto imgs = white_ensemble(64, 128, 2);
  const auto c = estimate_nps(imgs, {64, 64, 128, 128, 64});
  const auto s = smooth_nps(c, 8);
  double mean = 0.0;
  for (double p : s.power) mean += p;
  mean /= static_cast<double>(s.n_bins());
  double worst = 0.0;
  for (double p : s.power) worst = std::max(worst, std::abs(p - mean) / mean);
  EXPECT_LT(worst, 0.2);
  // Periodogram of unit-variance white noise has unit level.
  EXPECT_NEAR(mean, 1.0, 0.05);
}

TEST(EstimateNps, InjectedSinusoidDominatesItsBin) {
  const std::size_t n = 128, m = 16;
  const double f0 = 0.25;  // cycles/pixel along columns
  auto imgs = white_ensemble(m, n, 3);
  Rng rng(33);
  for (auto& g : imgs) {
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        g(r, c) += 3.0 * std::cos(2.0 * std::numbers::pi * f0 * static_cast<double>(c) + phase);
      }
    }
  }
  const auto curve = estimate_nps(imgs, {64, 64, n, n, m});
  const auto bin = static_cast<std::size_t>(f0 / (0.5 / 256.0));
  std::vector<double> sorted = curve.power;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  EXPECT_GE(curve.power[bin], 10.0 * median);
  EXPECT_DOUBLE_EQ(curve.frequency[bin], f0);
}

TEST(EstimateNps, InvariantToConstantOffset) {
  auto imgs = white_ensemble(4, 64, 4);
  const RoiSpec roi{32, 32, 48, 40, 4};
  const auto a = estimate_nps(imgs, roi);
  for (auto& g : imgs) {
    for (auto& v : g.values()) v += 17.0;
  }
  const auto b = estimate_nps(imgs, roi);
  for (std::size_t i = 0; i < a.n_bins(); ++i) EXPECT_NEAR(a.power[i], b.power[i], 1e-9 * (1.0 + a.power[i]));
}

TEST(EstimateNps, FrequencyUnitsFollowPixelPitch) {
  const auto imgs = white_ensemble(2, 32, 5);
  NpsOptions opt;
  opt.n_bins = 16;
  opt.pixel_pitch_mm = 0.5;
  const auto c = estimate_nps(imgs, {16, 16, 32, 32, 2}, opt);
  EXPECT_EQ(c.n_bins(), 16u);
  EXPECT_DOUBLE_EQ(c.frequency[0], 0.0);
  EXPECT_DOUBLE_EQ(c.frequency[15], 15.0 * (0.5 / 16.0) / 0.5);
}

TEST(EstimateNps, RejectsBadInput) {
  const auto imgs = white_ensemble(3, 32, 6);
  EXPECT_THROW(estimate_nps({imgs[0]}, {16, 16, 8, 8, 1}), ValidationError);
  EXPECT_THROW(estimate_nps(imgs, {16, 16, 8, 8, 2}), ValidationError);    // ensemble size mismatch
  EXPECT_THROW(estimate_nps(imgs, {30, 16, 8, 8, 3}), ValidationError);    // ROI outside
  EXPECT_THROW(estimate_nps({imgs[0], Grid<double>(31, 32, 0.0)}, {16, 16, 8, 8, 2}), ValidationError);
}

TEST(NormalizeNps, Examples) {
  const auto flat = normalize_nps(curve_of(std::vector<double>(256, 3.0), false));
  EXPECT_TRUE(flat.normalized);
  for (double p : flat.power) EXPECT_DOUBLE_EQ(p, 1.0 / 256.0);
  std::vector<double> one(256, 0.0);
  one[17] = 4.2;
  const auto single = normalize_nps(curve_of(one, false));
  EXPECT_EQ(single.power[17], 1.0);
  const auto c = curve_of({1.0, 2.0, 5.0}, false);
  const auto scaled = curve_of({7.0, 14.0, 35.0}, false);
  const auto a = normalize_nps(c), b = normalize_nps(scaled);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.power[i], b.power[i], 1e-15);
  EXPECT_THROW(normalize_nps(curve_of({0.0, 0.0}, false)), DegenerateInputError);
  EXPECT_THROW(normalize_nps(curve_of({1.0, -1.0}, false)), ValidationError);
}

TEST(EntropyFlatness, IdealAndDegenerateCases) {
  EXPECT_NEAR(entropy_flatness(curve_of(std::vector<double>(256, 1.0 / 256.0))), 8.0, 1e-9);
  std::vector<double> one(256, 0.0);
  one[0] = 1.0;
  EXPECT_EQ(entropy_flatness(curve_of(one)), 0.0);
  std::vector<double> two(256, 0.0);
  two[3] = two[200] = 0.5;
  EXPECT_NEAR(entropy_flatness(curve_of(two)), 1.0, 1e-12);
}

TEST(EntropyFlatness, BoundedAndMaximalOnlyWhenFlat) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(256);
    for (auto& v : p) v = rng.uniform(0.0, 1.0);
    const double h = entropy_flatness(normalize_nps(curve_of(p, false)));
    EXPECT_GE(h, 0.0);
    EXPECT_LT(h, 8.0);
  }
}

TEST(EntropyFlatness, PermutationInvariant) {
  Rng rng(8);
  std::vector<double> p(256);
  for (auto& v : p) v = rng.uniform(0.0, 1.0);
  const auto c = normalize_nps(curve_of(p, false));
  auto shuffled = c;
  for (std::size_t i = shuffled.power.size() - 1; i > 0; --i) {
    std::swap(shuffled.power[i], shuffled.power[rng.below(i + 1)]);
  }
  EXPECT_NEAR(entropy_flatness(c), entropy_flatness(shuffled), 1e-12);
}

TEST(EntropyFlatness, ConcaveAlongFlatToPeakedMixture) {
  std::vector<double> flat(256, 1.0 / 256.0), peaked(256, 0.0);
  for (std::size_t i = 0; i < 8; ++i) peaked[i] = 1.0 / 8.0;
  const double hf = entropy_flatness(curve_of(flat)), hp = entropy_flatness(curve_of(peaked));
  for (double t : {0.25, 0.5, 0.75}) {
    std::vector<double> mix(256);
    for (std::size_t i = 0; i < 256; ++i) mix[i] = t * flat[i] + (1.0 - t) * peaked[i];
    EXPECT_GE(entropy_flatness(curve_of(mix)), t * hf + (1.0 - t) * hp);
  }
}

TEST(EntropyFlatness, RequiresNormalizedCurve) {
  EXPECT_THROW(entropy_flatness(curve_of({0.5, 0.5}, false)), UsageError);
  EXPECT_THROW(entropy_flatness(curve_of({0.5, 0.6}, true)), UsageError);
}

TEST(BandEnergy, FullBandIsParsevalTotal) {
  const auto g = white_ensemble(1, 50, 9).front();
  const double total = sum_of_squares(g);
  EXPECT_NEAR(band_energy(g, 0.0, 0.5), total, 1e-9 * total);
}

TEST(BandEnergy, ConstantHasNoEnergyAwayFromDc) {
  EXPECT_NEAR(band_energy(Grid<double>(40, 40, 2.5), 0.05, 0.5), 0.0, 1e-18);
  EXPECT_NEAR(band_energy(Grid<double>(40, 40, 2.5), 0.0, 0.05), 2.5 * 2.5 * 1600, 1e-9);
}

TEST(BandEnergy, WhiteNoiseEnergyProportionalToBandArea) {
  const auto g = white_ensemble(1, 1000, 10).front();  // 1e6 samples
  const double total = band_energy(g, 0.0, 0.5);
  // Area of the annulus 0.1 <= rho <= 0.3 inside the unit-period square.
  const double area = std::numbers::pi * (0.3 * 0.3 - 0.1 * 0.1);
  EXPECT_NEAR(band_energy(g, 0.1, 0.3) / total, area, 0.05 * area);
}

TEST(BandEnergy, RejectsEmptyBand) {
  const Grid<double> g(8, 8, 1.0);
  EXPECT_THROW(band_energy(g, 0.3, 0.3), ValidationError);
  EXPECT_THROW(band_energy(g, 0.3, 0.1), ValidationError);
  EXPECT_THROW(band_energy(g, 0.0, 0.6), ValidationError);
}

TEST(NpsCsv, HeaderAndRoundTrip) {
  const auto c = normalize_nps(curve_of({1.0, 3.0, 4.0}, false));
  const RoiSpec roi{10, 12, 8, 6, 5};
  const auto text = nps_to_csv(c, roi);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "# roi_center_row=10 roi_center_col=12 roi_width=8 roi_height=6 ensemble=5 normalized=true");
  const auto back = nps_from_csv(text);
  EXPECT_TRUE(back.normalized);
  EXPECT_EQ(back.power, c.power);
  EXPECT_EQ(back.frequency, c.frequency);
}
