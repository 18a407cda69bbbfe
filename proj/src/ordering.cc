#include "scenesynth/ordering.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <queue>
#include <tuple>

namespace scenesynth::ordering {

int GenerationOrder::backgroundCount() const {
  return static_cast<int>(std::count_if(rank.values().begin(), rank.values().end(),
                                        [](int r) { return r >= 0; }));
}

std::vector<int> GenerationOrder::positionsByRank() const {
  std::vector<int> positions(backgroundCount(), -1);
  for (size_t i = 0; i < rank.size(); ++i) {
    if (rank[i] >= 0) positions[rank[i]] = static_cast<int>(i);
  }
  return positions;
}

void GenerationOrder::validate() const {
  const int count = backgroundCount();
  std::vector<uint8_t> seen(count, 0);
  for (int r : rank.values()) {
    SS_CHECK(r >= -1 && r < count, "order: rank out of range");
    if (r >= 0) {
      SS_CHECK(!seen[r], "order: duplicate rank");
      seen[r] = 1;
    }
  }
}

std::pair<double, double> centerOfMass(const Mask& visible) {
  double sr = 0, sc = 0;
  size_t n = 0;
  for (int r = 0; r < visible.height(); ++r) {
    for (int c = 0; c < visible.width(); ++c) {
      if (!visible(r, c)) continue;
      sr += r;
      sc += c;
      ++n;
    }
  }
  SS_CHECK(n > 0, "centerOfMass: no visible pixels");
  return {sr / n, sc / n};
}

namespace {

// Priority of a background pixel: squared distance to the center (quantized so
// that mirror-image pixels compare equal), spiral angle, then row and column.
struct Key {
  long long dist;
  double angle;
  int row, col;

  bool operator<(const Key& o) const {
    return std::tie(dist, angle, row, col) < std::tie(o.dist, o.angle, o.row, o.col);
  }
  bool operator>(const Key& o) const { return o < *this; }
};

}  // namespace

GenerationOrder generateOrder(const Mask& visible) {
  const int h = visible.height(), w = visible.width();
  SS_CHECK(h >= 1 && w >= 1, "generateOrder: empty mask");
  GenerationOrder order{Grid<int>(h, w, -1)};

  const size_t visible_count = countTrue(visible);
  if (visible_count == visible.size()) return order;
  const auto [cr, cc] = visible_count > 0 ? centerOfMass(visible)
                                          : std::pair<double, double>((h - 1) / 2.0, (w - 1) / 2.0);

  Grid<Key> keys(h, w);
  std::vector<Key> all;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (visible(r, c)) continue;
      const double dr = r - cr, dc = c - cc;
      double angle = std::atan2(dr, dc);
      if (angle < 0) angle += 2 * std::numbers::pi;
      if (angle >= 2 * std::numbers::pi) angle = 0;
      keys(r, c) = {std::llround((dr * dr + dc * dc) * 1e9), angle, r, c};
      all.push_back(keys(r, c));
    }
  }
  std::sort(all.begin(), all.end());

  Mask done = visible;
  Mask queued(h, w, 0);
  std::priority_queue<Key, std::vector<Key>, std::greater<Key>> frontier;
  auto pushNeighbors = [&](int r, int c) {
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr, cc2 = c + dc;
        if (!done.inBounds(rr, cc2) || done(rr, cc2) || queued(rr, cc2)) continue;
        queued(rr, cc2) = 1;
        frontier.push(keys(rr, cc2));
      }
    }
  };

  // The seed is the globally closest background pixel, not necessarily one
  // touching the visible region.
  size_t global_cursor = 0;
  int next_rank = 0;
  auto assign = [&](const Key& k) {
    order.rank(k.row, k.col) = next_rank++;
    done(k.row, k.col) = 1;
    pushNeighbors(k.row, k.col);
  };
  assign(all[0]);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (visible(r, c)) pushNeighbors(r, c);
    }
  }

  const int total = static_cast<int>(all.size());
  while (next_rank < total) {
    while (!frontier.empty() && done(frontier.top().row, frontier.top().col)) frontier.pop();
    if (!frontier.empty()) {
      const Key k = frontier.top();
      frontier.pop();
      assign(k);
      continue;
    }
    // Disconnected background: restart from the closest unordered pixel.
    while (done(all[global_cursor].row, all[global_cursor].col)) ++global_cursor;
    assign(all[global_cursor]);
  }
  return order;
}

GenerationOrder rasterOrder(const Mask& visible) {
  GenerationOrder order{Grid<int>(visible.height(), visible.width(), -1)};
  int next = 0;
  for (size_t i = 0; i < visible.size(); ++i) {
    if (!visible[i]) order.rank[i] = next++;
  }
  return order;
}

namespace {

Stencils buildStencils(const GenerationOrder& order, int kernel, LayerKind kind) {
  const int h = order.height(), w = order.width();
  const int half = kernel / 2;
  const int taps = kernel * kernel;
  Stencils s{kernel, kind, std::vector<uint8_t>(static_cast<size_t>(h) * w * taps, 0)};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int rank_p = order.rank(r, c);
      const size_t base = (static_cast<size_t>(r) * w + c) * taps;
      for (int t = 0; t < taps; ++t) {
        const int rr = r + t / kernel - half, cc = c + t % kernel - half;
        if (!order.rank.inBounds(rr, cc)) continue;
        const int rank_q = order.rank(rr, cc);
        const bool self = rr == r && cc == c;
        bool admit;
        if (rank_q == -1) {
          admit = true;
        } else if (self) {
          admit = kind == LayerKind::kLater;
        } else {
          admit = rank_p >= 0 && rank_q < rank_p;
        }
        s.admitted[base + t] = admit;
      }
    }
  }
  return s;
}

}  // namespace

LocalMaskSet buildLocalMasks(const GenerationOrder& order, int kernel, int layers) {
  SS_CHECK(kernel >= 1 && kernel % 2 == 1, "buildLocalMasks: kernel must be odd and >= 1");
  SS_CHECK(layers >= 1, "buildLocalMasks: layers must be >= 1");
  LocalMaskSet set;
  set.height = order.height();
  set.width = order.width();
  set.kernel = kernel;
  set.layers = layers;
  set.first = buildStencils(order, kernel, LayerKind::kFirst);
  set.later = buildStencils(order, kernel, LayerKind::kLater);
  return set;
}

void writeOrder(std::ostream& os, const GenerationOrder& order) {
  os << order.height() << ' ' << order.width() << '\n';
  for (int r = 0; r < order.height(); ++r) {
    for (int c = 0; c < order.width(); ++c) os << (c ? " " : "") << order.rank(r, c);
    os << '\n';
  }
}

GenerationOrder readOrder(std::istream& is) {
  int h = 0, w = 0;
  SS_CHECK(static_cast<bool>(is >> h >> w) && h > 0 && w > 0, "readOrder: bad header");
  GenerationOrder order{Grid<int>(h, w, -1)};
  for (auto& v : order.rank.values()) SS_CHECK(static_cast<bool>(is >> v), "readOrder: truncated");
  order.validate();
  return order;
}

}  // namespace scenesynth::ordering
