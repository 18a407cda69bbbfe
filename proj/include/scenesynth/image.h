#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "scenesynth/common.h"

namespace scenesynth {

// Row-major 2D array. The basic container for images, masks, depth and ranks.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, const T& fill = T{})
      : height_(height), width_(width), data_(checkedSize(height, width), fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) { return data_[static_cast<size_t>(row) * width_ + col]; }
  const T& operator()(int row, int col) const {
    return data_[static_cast<size_t>(row) * width_ + col];
  }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  bool inBounds(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }
  template <typename U>
  bool sameShape(const Grid<U>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool operator==(const Grid& other) const = default;

 private:
  static size_t checkedSize(int height, int width) {
    SS_CHECK(height >= 0 && width >= 0, "Grid: negative dimensions");
    return static_cast<size_t>(height) * static_cast<size_t>(width);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Color = Eigen::Vector3f;
using Image = Grid<Color>;
// uint8_t rather than bool so that element references work.
using Mask = Grid<uint8_t>;

// 8-bit RGB, used wherever colors must survive a file round trip bit-exactly.
struct Rgb8 {
  uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb8&) const = default;
};

inline uint8_t toByte(float v) {
  const float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return static_cast<uint8_t>(c * 255.f + 0.5f);
}
inline Rgb8 toRgb8(const Color& c) { return {toByte(c.x()), toByte(c.y()), toByte(c.z())}; }
inline Color fromRgb8(const Rgb8& c) {
  return Color(c.r / 255.f, c.g / 255.f, c.b / 255.f);
}

// Quantizes every channel to the nearest 1/255 step.
Image quantize8(const Image& image);

size_t countTrue(const Mask& mask);

// Morphological erosion with a (2r+1)x(2r+1) square (8-connectivity). Pixels
// outside the frame count as false.
Mask erode(const Mask& mask, int radius);

// Frontier fill: each round, every undefined pixel with at least one defined
// 8-neighbor takes the mean of those neighbors and becomes defined. Only pixels
// set in `fillable` (all, when null) are filled. Returns the number of rounds
// that made progress. `defined` is updated in place.
template <typename T>
int frontierFill(Grid<T>& values, Mask& defined, int max_rounds, const Mask* fillable = nullptr);

// Minimum chebyshev distance from every pixel to a pixel where `mask` is set,
// capped at `cap` (pixels farther away receive `cap`).
Grid<int> chebyshevDistance(const Mask& mask, int cap);

}  // namespace scenesynth
