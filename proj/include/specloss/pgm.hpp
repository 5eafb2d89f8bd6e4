#pragma once

// 8-bit binary PGM export with an explicit display window.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "specloss/error.hpp"
#include "specloss/grid.hpp"
#include "specloss/rfl1.hpp"

namespace specloss {

// Maps [level - window/2, level + window/2] linearly onto 0..255, clamping.
inline std::string encode_pgm(const Grid<double>& img, double window, double level) {
  if (!(window > 0.0)) throw ValidationError("pgm: window must be > 0");
  if (img.empty()) throw ValidationError("pgm: empty image");
  std::string out = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n255\n";
  const double lo = level - 0.5 * window;
  for (double v : img.values()) {
    const double t = std::clamp((v - lo) / window, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const Grid<double>& img, double window,
                      double level) {
  detail::write_file_atomic(path, encode_pgm(img, window, level));
}

}  // namespace specloss
