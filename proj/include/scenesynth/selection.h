#pragma once

#include <functional>
#include <vector>

#include "scenesynth/ar_model.h"
#include "scenesynth/image.h"

namespace scenesynth::selection {

struct ScoredSample {
  int index = 0;
  double detail_score = 0;   // higher = more detail
  double entropy_score = 0;  // lower = more confident
};

// Mean absolute forward difference: 0.5 * (mean |horizontal| + mean |vertical|)
// over all channels.
double detailScore(const Image& image);

// Mean softmax entropy of the model's predictions at the background positions.
double entropyScore(const ar::ArModel& model, const vq::TokenGrid& completed,
                    const ordering::GenerationOrder& order);

// Competition ranks (ties share the minimum rank). `descending` ranks the
// largest value first.
std::vector<int> competitionRanks(const std::vector<double>& values, bool descending);

// Index of the sample with the lowest mean of its detail rank (descending) and
// entropy rank (ascending); ties go to the lowest index.
int rankCombine(const std::vector<ScoredSample>& samples);

// Scorer interface: the defaults are the proxies above; learned scorers can be
// substituted without touching the pipeline.
struct Scorers {
  std::function<double(const Image&)> detail;
  std::function<double(const vq::TokenGrid&, const ordering::GenerationOrder&)> entropy;

  static Scorers proxies(const ar::ArModel& model);
};

}  // namespace scenesynth::selection
