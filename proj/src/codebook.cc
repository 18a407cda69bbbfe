#include "scenesynth/codebook.h"

#include <cmath>
#include <limits>

#include "scenesynth/binary_io.h"
#include "scenesynth/rng.h"

namespace scenesynth::vq {

void Codebook::validate() const {
  SS_CHECK(patch >= 1, "codebook: patch must be >= 1");
  SS_CHECK(!vectors.empty(), "codebook: K must be >= 1");
  for (const auto& v : vectors) {
    SS_CHECK(static_cast<int>(v.size()) == dim(), "codebook: vector of wrong dimension");
    for (float x : v) SS_CHECK(std::isfinite(x), "codebook: non-finite entry");
  }
}

namespace {

using Patch = std::vector<double>;

double sqDist(const Patch& a, const Patch& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::vector<Patch> extractPatches(const std::vector<Image>& images, int patch) {
  std::vector<Patch> patches;
  for (const Image& image : images) {
    SS_CHECK(image.height() % patch == 0 && image.width() % patch == 0,
             "fitCodebook: image size not divisible by patch");
    for (int pr = 0; pr < image.height(); pr += patch) {
      for (int pc = 0; pc < image.width(); pc += patch) {
        Patch p;
        p.reserve(patch * patch * 3);
        for (int r = 0; r < patch; ++r)
          for (int c = 0; c < patch; ++c)
            for (int ch = 0; ch < 3; ++ch) p.push_back(image(pr + r, pc + c)[ch]);
        patches.push_back(std::move(p));
      }
    }
  }
  return patches;
}

// Nearest centroid, lowest index on ties.
std::pair<int, double> nearest(const Patch& p, const std::vector<Patch>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < static_cast<int>(centroids.size()); ++k) {
    const double d = sqDist(p, centroids[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return {best, best_d};
}

}  // namespace

Codebook fitCodebook(const std::vector<Image>& images, int k, int patch, uint64_t seed,
                     const FitOptions& options, FitReport* report) {
  SS_CHECK(!images.empty(), "fitCodebook: no images");
  SS_CHECK(k >= 1, "fitCodebook: K must be >= 1");
  SS_CHECK(patch >= 1, "fitCodebook: patch must be >= 1");
  const std::vector<Patch> patches = extractPatches(images, patch);
  const size_t n = patches.size();
  SS_CHECK(n > 0, "fitCodebook: no patches");

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<Patch> centroids;
  centroids.push_back(patches[uniformIndex(rng, n)]);
  std::vector<double> d2(n);
  for (size_t i = 0; i < n; ++i) d2[i] = sqDist(patches[i], centroids[0]);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0;
    for (double d : d2) total += d;
    size_t pick = 0;
    if (total <= 0) {
      pick = uniformIndex(rng, n);
    } else {
      const double target = uniform01(rng) * total;
      double acc = 0;
      pick = n - 1;
      for (size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(patches[pick]);
    for (size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sqDist(patches[i], centroids.back()));
  }

  FitReport local_report;
  FitReport& rep = report ? *report : local_report;
  rep = {};
  std::vector<int> assignment(n, 0);
  std::vector<double> dist(n, 0);
  const size_t dim = patches[0].size();
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double objective = 0;
    for (size_t i = 0; i < n; ++i) {
      const auto [a, d] = nearest(patches[i], centroids);
      assignment[i] = a;
      dist[i] = d;
      objective += d;
    }
    rep.objective.push_back(objective);
    rep.iterations = iter + 1;

    std::vector<Patch> next(k, Patch(dim, 0.0));
    std::vector<size_t> count(k, 0);
    for (size_t i = 0; i < n; ++i) {
      ++count[assignment[i]];
      for (size_t j = 0; j < dim; ++j) next[assignment[i]][j] += patches[i][j];
    }
    std::vector<uint8_t> taken(n, 0);
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) {
        for (double& v : next[c]) v /= static_cast<double>(count[c]);
        continue;
      }
      // Empty cluster: re-seed from the patch farthest from its centroid.
      size_t far = 0;
      double far_d = -1;
      for (size_t i = 0; i < n; ++i) {
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      taken[far] = 1;
      next[c] = patches[far];
    }
    double shift = 0;
    for (int c = 0; c < k; ++c) shift = std::max(shift, std::sqrt(sqDist(next[c], centroids[c])));
    centroids = std::move(next);
    if (shift < options.tolerance) break;
  }

  Codebook codebook;
  codebook.patch = patch;
  for (const Patch& c : centroids) codebook.vectors.emplace_back(c.begin(), c.end());
  return codebook;
}

TokenGrid encode(const Image& image, const Mask& visible, const Codebook& codebook,
                 double known_fraction) {
  codebook.validate();
  const int p = codebook.patch;
  SS_CHECK(image.sameShape(visible), "encode: image/mask shape mismatch");
  SS_CHECK(image.height() % p == 0 && image.width() % p == 0,
           "encode: image size not divisible by patch");
  TokenGrid grid(image.height() / p, image.width() / p);
  for (int tr = 0; tr < grid.height(); ++tr) {
    for (int tc = 0; tc < grid.width(); ++tc) {
      int seen = 0;
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) seen += visible(tr * p + r, tc * p + c) ? 1 : 0;
      if (seen == 0) continue;
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < codebook.size(); ++k) {
        const std::vector<float>& v = codebook.vectors[k];
        double d = 0;
        for (int r = 0; r < p; ++r) {
          for (int c = 0; c < p; ++c) {
            if (!visible(tr * p + r, tc * p + c)) continue;
            const Color& px = image(tr * p + r, tc * p + c);
            const int base = (r * p + c) * 3;
            for (int ch = 0; ch < 3; ++ch) {
              const double diff = static_cast<double>(px[ch]) - v[base + ch];
              d += diff * diff;
            }
          }
        }
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      grid.tokens(tr, tc) = best;
      grid.known(tr, tc) = static_cast<double>(seen) / (p * p) >= known_fraction;
    }
  }
  return grid;
}

Image decode(const TokenGrid& tokens, const Codebook& codebook) {
  codebook.validate();
  const int p = codebook.patch;
  Image image(tokens.height() * p, tokens.width() * p);
  for (int tr = 0; tr < tokens.height(); ++tr) {
    for (int tc = 0; tc < tokens.width(); ++tc) {
      SS_CHECK(tokens.known(tr, tc), "decode: unknown token");
      const int t = tokens.tokens(tr, tc);
      SS_CHECK(t >= 0 && t < codebook.size(), "decode: token out of range");
      const std::vector<float>& v = codebook.vectors[t];
      for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
          const int base = (r * p + c) * 3;
          image(tr * p + r, tc * p + c) = Color(v[base], v[base + 1], v[base + 2]);
        }
      }
    }
  }
  return image;
}

void saveCodebook(const std::string& path, const Codebook& codebook) {
  codebook.validate();
  BinaryWriter w(path);
  w.magic("PSCB");
  w.put<uint32_t>(1);
  w.put<uint32_t>(static_cast<uint32_t>(codebook.size()));
  w.put<uint32_t>(static_cast<uint32_t>(codebook.patch));
  for (const auto& v : codebook.vectors)
    for (float x : v) w.put<float>(x);
  w.finish();
}

Codebook loadCodebook(const std::string& path) {
  BinaryReader r(path);
  r.expectMagic("PSCB");
  SS_CHECK(r.get<uint32_t>() == 1, path + ": unsupported codebook version");
  const uint32_t k = r.get<uint32_t>();
  const uint32_t patch = r.get<uint32_t>();
  SS_CHECK(k >= 1 && k < (1u << 20) && patch >= 1 && patch < 1024, path + ": bad codebook header");
  Codebook codebook;
  codebook.patch = static_cast<int>(patch);
  codebook.vectors.assign(k, std::vector<float>(patch * patch * 3));
  for (auto& v : codebook.vectors)
    for (float& x : v) x = r.get<float>();
  r.expectEnd();
  codebook.validate();
  return codebook;
}

}  // namespace scenesynth::vq
