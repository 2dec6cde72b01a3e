#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <vector>

namespace pcr {

/// Row-major 2D raster. x is the column (u, rightward), y the row
/// (v, downward), origin at the top-left pixel.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : w_(width), h_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return w_; }
  int height() const { return h_; }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) {
    assert(x >= 0 && x < w_ && y >= 0 && y < h_);
    return data_[static_cast<std::size_t>(y) * w_ + x];
  }
  const T& at(int x, int y) const {
    assert(x >= 0 && x < w_ && y >= 0 && y < h_);
    return data_[static_cast<std::size_t>(y) * w_ + x];
  }

  /// Reads with coordinates clamped to the border.
  const T& clamped(int x, int y) const {
    x = std::clamp(x, 0, w_ - 1);
    y = std::clamp(y, 0, h_ - 1);
    return at(x, y);
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int w_ = 0;
  int h_ = 0;
  std::vector<T> data_;
};

}  // namespace pcr
