#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "specloss/error.hpp"

namespace specloss {

// Dense row-major 2-D array.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Grid(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw UsageError("grid data size does not match its shape");
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T* row(std::size_t r) noexcept { return data_.data() + r * cols_; }
  const T* row(std::size_t r) const noexcept { return data_.data() + r * cols_; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool same_shape(const Grid& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Grid& operator+=(const Grid& o) {
    check_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Grid& operator-=(const Grid& o) {
    check_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Grid& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend Grid operator+(Grid a, const Grid& b) { return a += b; }
  friend Grid operator-(Grid a, const Grid& b) { return a -= b; }
  friend Grid operator*(Grid a, T s) { return a *= s; }
  friend Grid operator*(T s, Grid a) { return a *= s; }

  bool operator==(const Grid&) const = default;

  // Copy of the sub-block [r0, r0+h) x [c0, c0+w).
  Grid crop(std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) const {
    if (r0 + h > rows_ || c0 + w > cols_) throw SizeError("crop exceeds grid bounds");
    Grid out(h, w);
    for (std::size_t r = 0; r < h; ++r) {
      std::copy_n(row(r0 + r) + c0, w, out.row(r));
    }
    return out;
  }

  template <typename U>
  Grid<U> cast() const {
    Grid<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  void check_shape(const Grid& o) const {
    if (!same_shape(o)) throw UsageError("grid shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
bool all_finite(const Grid<T>& g) {
  return std::all_of(g.values().begin(), g.values().end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
void require_same_shape(const Grid<T>& a, const Grid<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw UsageError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                     "x" + std::to_string(b.cols()) + ")");
  }
}

template <typename T>
double sum_of_squares(const Grid<T>& g) {
  double s = 0.0;
  for (T v : g.values()) s += static_cast<double>(v) * static_cast<double>(v);
  return s;
}

template <typename T>
double max_abs_difference(const Grid<T>& a, const Grid<T>& b) {
  require_same_shape(a, b, "max_abs_difference");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

// 2-D raster with physical pixel size.
struct ImageGrid {
  Grid<double> pixels;
  double pixel_pitch_mm = 1.0;
};

}  // namespace specloss
