#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scenesynth/image.h"

namespace scenesynth::vq {

// K patch vectors of patch*patch*3 values, laid out row-major, RGB interleaved.
struct Codebook {
  int patch = 0;
  std::vector<std::vector<float>> vectors;

  int size() const { return static_cast<int>(vectors.size()); }
  int dim() const { return patch * patch * 3; }
  void validate() const;
  bool operator==(const Codebook&) const = default;
};

struct TokenGrid {
  Grid<int> tokens;
  Mask known;

  TokenGrid() = default;
  TokenGrid(int height, int width) : tokens(height, width, 0), known(height, width, 0) {}
  int height() const { return tokens.height(); }
  int width() const { return tokens.width(); }
  bool fullyKnown() const { return countTrue(known) == known.size(); }
  bool operator==(const TokenGrid&) const = default;
};

struct FitOptions {
  int max_iterations = 100;
  double tolerance = 1e-6;  // max centroid shift
};

struct FitReport {
  std::vector<double> objective;  // sum of squared distances after each assignment
  int iterations = 0;
};

Codebook fitCodebook(const std::vector<Image>& images, int k, int patch, uint64_t seed,
                     const FitOptions& options = {}, FitReport* report = nullptr);

TokenGrid encode(const Image& image, const Mask& visible, const Codebook& codebook,
                 double known_fraction);

Image decode(const TokenGrid& tokens, const Codebook& codebook);

// Binary file: "PSCB", u32 version, u32 K, u32 patch, then K*patch*patch*3 f32.
void saveCodebook(const std::string& path, const Codebook& codebook);
Codebook loadCodebook(const std::string& path);

}  // namespace scenesynth::vq
