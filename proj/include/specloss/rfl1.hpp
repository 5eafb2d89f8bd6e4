#pragma once

// RFL1 raster files: an ASCII header line "rfl1 <width> <height> <frames>\n"
// followed by width*height*frames little-endian float32 values, row-major
// within a frame, frames stored consecutively.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "specloss/error.hpp"
#include "specloss/grid.hpp"

namespace specloss {

namespace detail {

inline void put_f32_le(std::string& out, float f) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.append(b, 4);
}

inline float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

// Writes to "<path>.tmp" and renames, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace detail

inline std::string encode_rfl1(const std::vector<Grid<double>>& frames) {
  if (frames.empty()) throw UsageError("rfl1: no frames to encode");
  const auto h = frames.front().rows();
  const auto w = frames.front().cols();
  std::string out = "rfl1 " + std::to_string(w) + " " + std::to_string(h) + " " +
                    std::to_string(frames.size()) + "\n";
  out.reserve(out.size() + 4 * w * h * frames.size());
  for (const auto& f : frames) {
    if (f.rows() != h || f.cols() != w) throw UsageError("rfl1: frames differ in shape");
    for (double v : f.values()) detail::put_f32_le(out, static_cast<float>(v));
  }
  return out;
}

inline std::vector<Grid<double>> decode_rfl1(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw DataError("rfl1: missing header line");
  std::istringstream header(bytes.substr(0, nl));
  std::string magic;
  long long w = -1, h = -1, n = -1;
  header >> magic >> w >> h >> n;
  if (magic != "rfl1" || !header || w <= 0 || h <= 0 || n <= 0) {
    throw DataError("rfl1: malformed header '" + bytes.substr(0, nl) + "'");
  }
  const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  const std::size_t payload = bytes.size() - nl - 1;
  if (payload != 4 * count * static_cast<std::size_t>(n)) {
    throw DataError("rfl1: payload size " + std::to_string(payload) + " does not match header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  std::vector<Grid<double>> frames;
  frames.reserve(static_cast<std::size_t>(n));
  for (long long f = 0; f < n; ++f) {
    Grid<double> g(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    for (std::size_t i = 0; i < count; ++i, p += 4) g[i] = detail::get_f32_le(p);
    frames.push_back(std::move(g));
  }
  return frames;
}

inline void write_rfl1(const std::filesystem::path& path, const std::vector<Grid<double>>& frames) {
  detail::write_file_atomic(path, encode_rfl1(frames));
}

inline std::vector<Grid<double>> read_rfl1(const std::filesystem::path& path) {
  return decode_rfl1(detail::read_file(path));
}

}  // namespace specloss
