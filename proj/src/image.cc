#include "scenesynth/image.h"

#include <algorithm>
#include <type_traits>

namespace scenesynth {

Image quantize8(const Image& image) {
  Image out(image.height(), image.width());
  for (size_t i = 0; i < image.size(); ++i) out[i] = fromRgb8(toRgb8(image[i]));
  return out;
}

size_t countTrue(const Mask& mask) {
  return static_cast<size_t>(std::count_if(mask.values().begin(), mask.values().end(),
                                           [](uint8_t v) { return v != 0; }));
}

Mask erode(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  const int h = mask.height(), w = mask.width();
  // Separable: a square structuring element is a row pass followed by a column pass.
  Mask rows(h, w, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      bool all = true;
      for (int dc = -radius; dc <= radius && all; ++dc) {
        const int cc = c + dc;
        all = cc >= 0 && cc < w && mask(r, cc);
      }
      rows(r, c) = all;
    }
  }
  Mask out(h, w, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      bool all = true;
      for (int dr = -radius; dr <= radius && all; ++dr) {
        const int rr = r + dr;
        all = rr >= 0 && rr < h && rows(rr, c);
      }
      out(r, c) = all;
    }
  }
  return out;
}

namespace {
template <typename T>
T zeroValue() {
  if constexpr (std::is_arithmetic_v<T>) {
    return T{0};
  } else {
    return T::Zero();
  }
}
}  // namespace

template <typename T>
int frontierFill(Grid<T>& values, Mask& defined, int max_rounds, const Mask* fillable) {
  SS_CHECK(values.sameShape(defined), "frontierFill: shape mismatch");
  const int h = values.height(), w = values.width();
  int rounds = 0;
  std::vector<std::pair<int, T>> updates;
  for (int it = 0; it < max_rounds; ++it) {
    updates.clear();
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (defined(r, c) || (fillable && !(*fillable)(r, c))) continue;
        T sum = zeroValue<T>();
        int n = 0;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if ((dr || dc) && defined.inBounds(r + dr, c + dc) && defined(r + dr, c + dc)) {
              sum += values(r + dr, c + dc);
              ++n;
            }
          }
        }
        if (n > 0) updates.emplace_back(r * w + c, sum / static_cast<float>(n));
      }
    }
    if (updates.empty()) break;
    for (const auto& [i, v] : updates) {
      values[i] = v;
      defined[i] = 1;
    }
    ++rounds;
  }
  return rounds;
}

template int frontierFill<Color>(Grid<Color>&, Mask&, int, const Mask*);
template int frontierFill<double>(Grid<double>&, Mask&, int, const Mask*);

Grid<int> chebyshevDistance(const Mask& mask, int cap) {
  const int h = mask.height(), w = mask.width();
  Grid<int> dist(h, w, cap);
  std::vector<int> frontier;
  for (int i = 0; i < h * w; ++i) {
    if (mask[i]) {
      dist[i] = 0;
      frontier.push_back(i);
    }
  }
  for (int d = 1; d < cap && !frontier.empty(); ++d) {
    std::vector<int> next;
    for (int i : frontier) {
      const int r = i / w, c = i % w;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (!dist.inBounds(rr, cc) || dist(rr, cc) <= d) continue;
          dist(rr, cc) = d;
          next.push_back(rr * w + cc);
        }
      }
    }
    frontier = std::move(next);
  }
  return dist;
}

}  // namespace scenesynth
