#include "scenesynth/selection.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scenesynth::selection {

double detailScore(const Image& image) {
  const int h = image.height(), w = image.width();
  double horizontal = 0, vertical = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (c + 1 < w) horizontal += (image(r, c + 1) - image(r, c)).cwiseAbs().sum();
      if (r + 1 < h) vertical += (image(r + 1, c) - image(r, c)).cwiseAbs().sum();
    }
  }
  const double nh = 3.0 * h * (w - 1), nv = 3.0 * (h - 1) * w;
  return 0.5 * ((nh > 0 ? horizontal / nh : 0.0) + (nv > 0 ? vertical / nv : 0.0));
}

double entropyScore(const ar::ArModel& model, const vq::TokenGrid& completed,
                    const ordering::GenerationOrder& order) {
  SS_CHECK(completed.fullyKnown(), "entropyScore: grid has unknown tokens");
  const Eigen::MatrixXd logits = ar::forward(model, completed, order);
  double total = 0;
  int count = 0;
  for (size_t i = 0; i < order.rank.size(); ++i) {
    if (order.rank[i] < 0) continue;
    total += ar::entropy(ar::temperatureSoftmax(logits.col(static_cast<Eigen::Index>(i)), 1.0));
    ++count;
  }
  return count == 0 ? 0.0 : total / count;
}

std::vector<int> competitionRanks(const std::vector<double>& values, bool descending) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return descending ? values[a] > values[b] : values[a] < values[b];
  });
  std::vector<int> ranks(values.size(), 0);
  for (size_t k = 0; k < idx.size(); ++k) {
    ranks[idx[k]] = (k > 0 && values[idx[k]] == values[idx[k - 1]]) ? ranks[idx[k - 1]]
                                                                   : static_cast<int>(k) + 1;
  }
  return ranks;
}

int rankCombine(const std::vector<ScoredSample>& samples) {
  SS_CHECK(!samples.empty(), "rankCombine: no samples");
  std::vector<double> detail, ent;
  for (const auto& s : samples) {
    SS_CHECK(std::isfinite(s.detail_score) && std::isfinite(s.entropy_score),
             "rankCombine: non-finite score");
    detail.push_back(s.detail_score);
    ent.push_back(s.entropy_score);
  }
  const std::vector<int> rank_detail = competitionRanks(detail, true);
  const std::vector<int> rank_entropy = competitionRanks(ent, false);
  size_t best = 0;
  // Compare summed ranks: same order as the mean, without rounding.
  for (size_t i = 1; i < samples.size(); ++i) {
    if (rank_detail[i] + rank_entropy[i] < rank_detail[best] + rank_entropy[best]) best = i;
  }
  return samples[best].index;
}

Scorers Scorers::proxies(const ar::ArModel& model) {
  return {detailScore, [&model](const vq::TokenGrid& grid, const ordering::GenerationOrder& order) {
            return entropyScore(model, grid, order);
          }};
}

}  // namespace scenesynth::selection
