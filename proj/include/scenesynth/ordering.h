#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "scenesynth/image.h"

namespace scenesynth::ordering {

// Visible (known) pixels carry rank -1; background pixels carry 0..B-1, each once.
struct GenerationOrder {
  Grid<int> rank;

  int height() const { return rank.height(); }
  int width() const { return rank.width(); }
  int backgroundCount() const;
  // Flat indices of the background positions, sorted by rank.
  std::vector<int> positionsByRank() const;
  void validate() const;
  bool operator==(const GenerationOrder&) const = default;
};

// Mean visible coordinate. Throws on an empty foreground.
std::pair<double, double> centerOfMass(const Mask& visible);

GenerationOrder generateOrder(const Mask& visible);

// Ranks assigned row by row; visible pixels keep -1.
GenerationOrder rasterOrder(const Mask& visible);

enum class LayerKind { kFirst, kLater };

// Per-position k x k admission stencils for one layer kind, flattened as
// [position][tap], taps in row-major order around the center.
struct Stencils {
  int kernel = 0;
  LayerKind kind = LayerKind::kFirst;
  std::vector<uint8_t> admitted;

  bool at(int position, int tap) const {
    return admitted[static_cast<size_t>(position) * kernel * kernel + tap];
  }
};

// Layer 0 uses the first-layer stencils (self excluded); every later layer shares
// the later-layer stencils (self included).
struct LocalMaskSet {
  int height = 0, width = 0, kernel = 0, layers = 0;
  Stencils first;
  Stencils later;

  const Stencils& layer(int l) const { return l == 0 ? first : later; }
};

LocalMaskSet buildLocalMasks(const GenerationOrder& order, int kernel, int layers);

// Text dump: "h w" on the first line, then h rows of space-separated ranks.
void writeOrder(std::ostream& os, const GenerationOrder& order);
GenerationOrder readOrder(std::istream& is);

}  // namespace scenesynth::ordering
