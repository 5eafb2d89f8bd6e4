#include <gtest/gtest.h>

#include <cmath>

#include "specloss/fbp.hpp"

using namespace specloss;

namespace {

Sinogram counts_of(std::vector<double> v) {
  Sinogram s;
  s.domain = SinogramDomain::counts;
  const std::size_t n = v.size();
  s.values = Grid<double>(1, n, std::move(v));
  s.view_angles = uniform_view_angles(1);
  return s;
}

Phantom disk(double cx, double cy, double r, double mu) {
  Phantom p;
  p.ellipses.push_back({cx, cy, r, r, 0.0, mu});
  return p;
}

}  // namespace

TEST(CountsToLineIntegrals, Examples) {
  const double i0 = 1e4, floor = 0.5;
  const auto p = counts_to_line_integrals(counts_of({i0, i0 / 2, 0.0, -3.0}), i0, floor);
  EXPECT_EQ(p.domain, SinogramDomain::line_integral);
  EXPECT_EQ(p.values[0], 0.0);
  EXPECT_NEAR(p.values[1], std::log(2.0), 1e-15);
  EXPECT_NEAR(p.values[2], std::log(i0 / floor), 1e-12);
  EXPECT_TRUE(std::isfinite(p.values[3]));
}

TEST(CountsToLineIntegrals, InvertsBeerLambertAboveFloor) {
  const double i0 = 1e4, floor = 0.5;
  Sinogram s;
  s.values = Grid<double>(1, 50);
  const double pmax = std::log(i0 / floor);
  for (std::size_t i = 0; i < 50; ++i) s.values[i] = pmax * static_cast<double>(i) / 49.0;
  s.view_angles = uniform_view_angles(1);
  const auto back = counts_to_line_integrals(attenuation_to_counts(s, i0), i0, floor);
  EXPECT_LT(max_abs_difference(back.values, s.values), 1e-12);
}

TEST(CountsToLineIntegrals, RejectsBadInput) {
  auto s = counts_of({1.0});
  EXPECT_THROW(counts_to_line_integrals(s, 0.0, 0.5), ValidationError);
  EXPECT_THROW(counts_to_line_integrals(s, 1e4, 0.0), ValidationError);
  s.domain = SinogramDomain::line_integral;
  EXPECT_THROW(counts_to_line_integrals(s, 1e4, 0.5), UsageError);
}

TEST(Fbp, ZeroSinogramGivesZeroImage) {
  Sinogram s;
  s.values = Grid<double>(90, 128, 0.0);
  s.view_angles = uniform_view_angles(90);
  const auto img = fbp(s, {128});
  for (double v : img.pixels.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(img.pixels.rows(), 128u);
}

class FbpDisk : public ::testing::TestWithParam<Apodization> {};

TEST_P(FbpDisk, InteriorMeanMatchesAttenuation) {
  const double mu = 0.02;
  const auto img = generate_phantom(disk(0.0, 0.0, 0.5, mu));
  const auto sino = radon_forward(img, 360, 384);
  ReconConfig rc;
  rc.apodization = GetParam();
  const auto rec = fbp(sino, rc);
  // Interior pixels: inside the disk eroded by 2 pixels.
  const double c = 127.5, radius_px = 0.5 * 128.0 - 2.0;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < 256; ++r) {
    for (std::size_t k = 0; k < 256; ++k) {
      const double dy = static_cast<double>(r) - c, dx = static_cast<double>(k) - c;
      if (dx * dx + dy * dy < radius_px * radius_px) {
        sum += rec.pixels(r, k);
        ++n;
      }
    }
  }
  EXPECT_NEAR(sum / static_cast<double>(n), mu, 0.05 * mu);
}

INSTANTIATE_TEST_SUITE_P(Apodizations, FbpDisk, ::testing::Values(Apodization::none, Apodization::hann));

TEST(Fbp, IsLinear) {
  Rng rng(3);
  Sinogram a, b;
  a.values = Grid<double>(60, 96);
  b.values = Grid<double>(60, 96);
  for (auto& v : a.values.values()) v = rng.normal();
  for (auto& v : b.values.values()) v = rng.uniform(0.0, 2.0);
  a.view_angles = b.view_angles = uniform_view_angles(60);
  Sinogram mix = a;
  mix.values = 2.5 * a.values - 0.75 * b.values;
  ReconConfig rc;
  rc.grid_size = 64;
  const auto lhs = fbp(mix, rc).pixels;
  const auto rhs = 2.5 * fbp(a, rc).pixels - 0.75 * fbp(b, rc).pixels;
  double scale = 0.0;
  for (double v : lhs.values()) scale = std::max(scale, std::abs(v));
  EXPECT_LT(max_abs_difference(lhs, rhs), 1e-6 * scale);
}

TEST(Fbp, OffCenterDiskLandsWhereItWasDrawn) {
  // Disk at x = +0.4, y = -0.25 (normalized), i.e. right of and below center.
  const auto img = generate_phantom(disk(0.4, -0.25, 0.12, 0.02));
  const auto rec = fbp(radon_forward(img, 360, 384), {});
  auto centroid = [](const Grid<double>& g) {
    double s = 0.0, sr = 0.0, sc = 0.0;
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) {
        const double w = std::max(0.0, g(r, c) - 0.01);
        s += w;
        sr += w * static_cast<double>(r);
        sc += w * static_cast<double>(c);
      }
    }
    return std::pair{sr / s, sc / s};
  };
  const auto [r_img, c_img] = centroid(img.pixels);
  const auto [r_rec, c_rec] = centroid(rec.pixels);
  EXPECT_NEAR(r_rec, r_img, 0.5);
  EXPECT_NEAR(c_rec, c_img, 0.5);
  EXPECT_NEAR(c_img, 127.5 + 0.4 * 128.0, 1.0);
  EXPECT_NEAR(r_img, 127.5 + 0.25 * 128.0, 1.0);
}

TEST(Fbp, PureNoiseHasNearZeroMean) {
  Rng rng(4);
  Sinogram s;
  s.values = Grid<double>(180, 192);
  for (auto& v : s.values.values()) v = rng.normal();
  s.view_angles = uniform_view_angles(180);
  ReconConfig rc;
  rc.grid_size = 128;
  const auto img = fbp(s, rc).pixels;
  double mean = 0.0, sq = 0.0;
  for (double v : img.values()) {
    mean += v;
    sq += v * v;
  }
  mean /= static_cast<double>(img.size());
  const double sd = std::sqrt(sq / static_cast<double>(img.size()) - mean * mean);
  EXPECT_LT(std::abs(mean), 0.05 * sd);
}

TEST(Fbp, RejectsBadInput) {
  Sinogram s;
  s.values = Grid<double>(10, 32, 0.0);
  s.view_angles = uniform_view_angles(10);
  s.view_angles[3] += 0.01;
  EXPECT_THROW(fbp(s, {32}), ValidationError);
  s.view_angles = uniform_view_angles(10);
  s.values(2, 2) = std::nan("");
  EXPECT_THROW(fbp(s, {32}), DataError);
  s.values(2, 2) = 0.0;
  s.domain = SinogramDomain::counts;
  EXPECT_THROW(fbp(s, {32}), UsageError);
  s.domain = SinogramDomain::line_integral;
  EXPECT_THROW(fbp(s, {8}), ValidationError);
}
