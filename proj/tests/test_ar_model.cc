#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "ar_reference.h"
#include "scenesynth/ar_model.h"
#include "scenesynth/ordering.h"
#include "test_util.h"

using namespace scenesynth;
using namespace scenesynth::ar;
using ordering::GenerationOrder;
using vq::TokenGrid;

namespace {

const ArConfig kSmall{.num_tokens = 5, .embed_dim = 6, .layers = 3, .kernel = 3, .channels = 7};

TokenGrid randomGrid(Rng& rng, int h, int w, int k) {
  TokenGrid g(h, w);
  for (size_t i = 0; i < g.tokens.size(); ++i) {
    g.tokens[i] = static_cast<int>(uniformIndex(rng, k));
    g.known[i] = 1;
  }
  return g;
}

// Random model with nonzero biases so that ReLUs are not all at their kinks.
ArModel randomModel(const ArConfig& cfg, uint64_t seed) {
  ArModel m(cfg, seed);
  Rng rng(seed ^ 0x5eed);
  for (auto& b : m.params().biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = uniformRange(rng, -0.2, 0.2);
  for (Eigen::Index i = 0; i < m.params().head_bias.size(); ++i) m.params().head_bias[i] = uniformRange(rng, -0.5, 0.5);
  return m;
}

TokenGrid partialOf(const TokenGrid& full, const GenerationOrder& order) {
  TokenGrid p = full;
  for (size_t i = 0; i < p.known.size(); ++i) {
    p.known[i] = order.rank[i] < 0;
    if (!p.known[i]) p.tokens[i] = 0;
  }
  return p;
}

}  // namespace

TEST(Forward, ZeroModelGivesHeadBias) {
  ArModel m = ArModel::zeros(kSmall);
  for (int k = 0; k < 5; ++k) m.params().head_bias[k] = 0.1 * k;
  Rng rng(1);
  const TokenGrid g = randomGrid(rng, 4, 4, 5);
  const GenerationOrder o = ordering::generateOrder(test::randomMask(rng, 4, 4, 0.3));
  const Eigen::MatrixXd logits = forward(m, g, o);
  for (int i = 0; i < 16; ++i) EXPECT_TRUE(logits.col(i).isApprox(m.params().head_bias));
  const ArModel z = ArModel::zeros(kSmall);
  const Eigen::MatrixXd zl = forward(z, g, o);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(entropy(temperatureSoftmax(zl.col(i), 1.0)), std::log(5.0), 1e-12);
  EXPECT_NEAR(nll(z, g, o), std::log(5.0), 1e-12);
}

TEST(Forward, MatchesReference) {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    const int h = 1 + static_cast<int>(uniformIndex(rng, 6)), w = 1 + static_cast<int>(uniformIndex(rng, 6));
    const ArConfig cfg{.num_tokens = 4 + static_cast<int>(uniformIndex(rng, 4)),
                       .embed_dim = 3,
                       .layers = 1 + static_cast<int>(uniformIndex(rng, 3)),
                       .kernel = uniformIndex(rng, 2) ? 3 : 5,
                       .channels = 4};
    const ArModel m = randomModel(cfg, t);
    const TokenGrid g = randomGrid(rng, h, w, cfg.num_tokens);
    const GenerationOrder o = ordering::generateOrder(test::randomMask(rng, h, w, uniform01(rng)));
    const Eigen::MatrixXd got = forward(m, g, o);
    const test::RefActivations ref = test::refForward(m, g.tokens, test::refAdmission(o, cfg.kernel));
    ASSERT_LT((got - ref.logits).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Forward, LaterRankTokensNeverReachEarlierLogits) {
  Rng rng(3);
  for (int t = 0; t < 40; ++t) {
    const int h = 2 + static_cast<int>(uniformIndex(rng, 4)), w = 2 + static_cast<int>(uniformIndex(rng, 4));
    const ArModel m = randomModel(kSmall, 100 + t);
    const TokenGrid g = randomGrid(rng, h, w, 5);
    const GenerationOrder o = ordering::generateOrder(test::randomMask(rng, h, w, 0.3));
    const Eigen::MatrixXd base = forward(m, g, o);
    const std::vector<int> pos = o.positionsByRank();
    for (size_t r = 0; r < pos.size(); ++r) {
      TokenGrid changed = g;
      changed.tokens[pos[r]] = (g.tokens[pos[r]] + 1 + static_cast<int>(uniformIndex(rng, 4))) % 5;
      const Eigen::MatrixXd after = forward(m, changed, o);
      for (int i = 0; i < h * w; ++i) {
        const int ri = o.rank[i];
        if (ri == -1 || ri <= static_cast<int>(r)) {
          for (int k = 0; k < 5; ++k) ASSERT_EQ(after(k, i), base(k, i));
        }
      }
    }
  }
}

TEST(Forward, KernelOneSingleLayerIgnoresTokens) {
  const ArConfig cfg{.num_tokens = 6, .embed_dim = 3, .layers = 1, .kernel = 1, .channels = 4};
  const ArModel m = randomModel(cfg, 7);
  Rng rng(4);
  const GenerationOrder o = ordering::generateOrder(Mask(3, 3, 0));
  const Eigen::VectorXd expect =
      m.params().head_weight * m.params().biases[0].cwiseMax(0.0) + m.params().head_bias;
  for (int t = 0; t < 5; ++t) {
    const Eigen::MatrixXd logits = forward(m, randomGrid(rng, 3, 3, 6), o);
    for (int i = 0; i < 9; ++i) EXPECT_TRUE(logits.col(i).isApprox(expect, 1e-12));
  }
}

TEST(Forward, ShapeErrors) {
  const ArModel m = randomModel(kSmall, 1);
  Rng rng(5);
  const TokenGrid g = randomGrid(rng, 4, 4, 5);
  EXPECT_THROW(forward(m, g, ordering::generateOrder(Mask(3, 4, 0))), Error);
  TokenGrid bad = g;
  bad.tokens[0] = 5;
  EXPECT_THROW(forward(m, bad, ordering::generateOrder(Mask(4, 4, 0))), Error);
  EXPECT_THROW(forward(m, g, ordering::buildLocalMasks(ordering::generateOrder(Mask(4, 4, 0)), 5, 3)), Error);
}

TEST(Gradient, MatchesFiniteDifferencesOnFourByFour) {
  Rng rng(6);
  for (int t = 0; t < 3; ++t) {
    const ArModel m = randomModel(kSmall, 200 + t);
    const TokenGrid g = randomGrid(rng, 4, 4, 5);
    const GenerationOrder o = ordering::generateOrder(test::randomMask(rng, 4, 4, 0.25));
    ArParameters grad;
    lossAndGradient(m, {{g, o}}, grad);
    const test::GradCheckResult r = test::checkGradient(m, g.tokens, o, grad, 1e-4, 1e-3, 1e-7);
    EXPECT_EQ(r.checked, m.params().count());
    EXPECT_EQ(r.failures, 0u) << "worst relative error " << r.worst;
  }
}

TEST(Gradient, BatchIsTheMeanOverAllBackgroundPositions) {
  Rng rng(7);
  const ArModel m = randomModel(kSmall, 9);
  TrainBatch batch;
  for (int i = 0; i < 5; ++i)
    batch.push_back({randomGrid(rng, 4, 4, 5), ordering::generateOrder(test::randomMask(rng, 4, 4, 0.4))});
  double total = 0;
  int positions = 0;
  for (const auto& ex : batch) {
    const test::RefActivations a = test::refForward(m, ex.grid.tokens, test::refAdmission(ex.order, 3));
    const int b = ex.order.backgroundCount();
    total += test::refMeanCe(a.logits, ex.grid.tokens, ex.order) * b;
    positions += b;
  }
  ArParameters grad;
  EXPECT_NEAR(lossAndGradient(m, batch, grad), total / positions, 1e-12);
  EXPECT_THROW(lossAndGradient(m, {}, grad), Error);
}

TEST(TrainStep, ZeroLearningRateLeavesModelUnchanged) {
  Rng rng(8);
  ArModel m = randomModel(kSmall, 3);
  const ArModel before = m;
  const TrainBatch batch{{randomGrid(rng, 4, 4, 5), ordering::generateOrder(Mask(4, 4, 0))}};
  const double a = trainStep(m, batch, 0.0);
  const double b = trainStep(m, batch, 0.0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(m.params().head_weight, before.params().head_weight);
  EXPECT_EQ(m.params().embed, before.params().embed);
  EXPECT_NEAR(a, nll(m, batch[0].grid, batch[0].order), 1e-12);
  EXPECT_THROW(trainStep(m, batch, -1.0), Error);
}

TEST(TrainStep, AppliesPlainGradientDescent) {
  Rng rng(9);
  ArModel m = randomModel(kSmall, 4);
  const TrainBatch batch{{randomGrid(rng, 4, 4, 5), ordering::generateOrder(test::randomMask(rng, 4, 4, 0.5))}};
  ArParameters grad;
  lossAndGradient(m, batch, grad);
  const ArModel before = m;
  trainStep(m, batch, 0.3);
  EXPECT_TRUE(m.params().head_weight.isApprox(before.params().head_weight - 0.3 * grad.head_weight));
  EXPECT_TRUE(m.params().weights[1][4].isApprox(before.params().weights[1][4] - 0.3 * grad.weights[1][4]));
}

// Every grid is one constant token: context reveals it, so the optimum is
// zero loss wherever context exists and ln K at the context-free first rank.
TEST(TrainStep, LearnsTheCopyTask) {
  const ArConfig cfg{.num_tokens = 5, .embed_dim = 8, .layers = 2, .kernel = 3, .channels = 16};
  ArModel m(cfg, 11);
  const GenerationOrder order = ordering::generateOrder(Mask(4, 4, 0));
  TrainBatch corpus;
  for (int k = 0; k < 5; ++k) {
    TokenGrid g(4, 4);
    for (size_t i = 0; i < g.tokens.size(); ++i) {
      g.tokens[i] = k;
      g.known[i] = 1;
    }
    corpus.push_back({g, order});
  }
  auto meanNll = [&] {
    double s = 0;
    for (const auto& ex : corpus) s += nll(m, ex.grid, ex.order);
    return s / corpus.size();
  };
  const double start = meanNll();
  EXPECT_NEAR(start, std::log(5.0), 0.1);
  for (int step = 0; step < 200; ++step) trainStep(m, corpus, 0.5);
  EXPECT_LE(meanNll(), 0.5 * start);
  for (int step = 0; step < 800; ++step) trainStep(m, corpus, 0.5);
  const int first = order.positionsByRank()[0];
  double ce_first = 0, ce_rest = 0;
  for (const auto& ex : corpus) {
    const Eigen::MatrixXd logits = forward(m, ex.grid, ex.order);
    for (int i = 0; i < 16; ++i) {
      const Eigen::VectorXd p = temperatureSoftmax(logits.col(i), 1.0);
      (i == first ? ce_first : ce_rest) -= std::log(p[ex.grid.tokens[i]]);
    }
  }
  EXPECT_NEAR(ce_first / 5, std::log(5.0), 0.05);
  EXPECT_LT(ce_rest / (5 * 15), 0.05);
}

TEST(Nll, MatchesReferenceAndEdgeCases) {
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    const ArModel m = randomModel(kSmall, 300 + t);
    const TokenGrid g = randomGrid(rng, 5, 4, 5);
    const GenerationOrder o = ordering::generateOrder(test::randomMask(rng, 5, 4, 0.3));
    const test::RefActivations a = test::refForward(m, g.tokens, test::refAdmission(o, 3));
    EXPECT_NEAR(nll(m, g, o), test::refMeanCe(a.logits, g.tokens, o), 1e-12);
  }
  const ArModel m = randomModel(kSmall, 1);
  const TokenGrid g = randomGrid(rng, 3, 3, 5);
  EXPECT_EQ(nll(m, g, ordering::generateOrder(Mask(3, 3, 1))), 0.0);
  TokenGrid partial = g;
  partial.known[4] = 0;
  EXPECT_THROW(nll(m, partial, ordering::generateOrder(Mask(3, 3, 0))), Error);
}

TEST(Sample, FullyKnownIsReturnedUnchanged) {
  Rng rng(13);
  const ArModel m = randomModel(kSmall, 2);
  const TokenGrid g = randomGrid(rng, 4, 4, 5);
  EXPECT_EQ(sample(m, g, ordering::generateOrder(Mask(4, 4, 1)), 0.5, 1), g);
}

TEST(Sample, ArgmaxOfZeroModelIsTokenZero) {
  const ArModel m = ArModel::zeros(kSmall);
  const GenerationOrder o = ordering::generateOrder(Mask(4, 4, 0));
  const TokenGrid out = sample(m, TokenGrid(4, 4), o, 0.0, 1);
  EXPECT_TRUE(out.fullyKnown());
  for (int t : out.tokens.values()) EXPECT_EQ(t, 0);
}

TEST(Sample, SeededAndIncrementalEqualsNaive) {
  Rng rng(14);
  for (int t = 0; t < 20; ++t) {
    const int h = 2 + static_cast<int>(uniformIndex(rng, 5)), w = 2 + static_cast<int>(uniformIndex(rng, 5));
    const ArModel m = randomModel(kSmall, 400 + t);
    const GenerationOrder o = ordering::generateOrder(test::randomMask(rng, h, w, 0.4));
    const TokenGrid partial = partialOf(randomGrid(rng, h, w, 5), o);
    for (double temp : {0.0, 0.5, 1.0, 2.0}) {
      const TokenGrid a = sample(m, partial, o, temp, 77 + t);
      EXPECT_EQ(a, sample(m, partial, o, temp, 77 + t));
      EXPECT_EQ(a, sample(m, partial, o, temp, 77 + t, SampleMode::kNaive));
      EXPECT_TRUE(a.fullyKnown());
      for (size_t i = 0; i < a.tokens.size(); ++i)
        if (partial.known[i]) EXPECT_EQ(a.tokens[i], partial.tokens[i]);
    }
  }
}

TEST(Sample, Errors) {
  const ArModel m = randomModel(kSmall, 1);
  const GenerationOrder o = ordering::generateOrder(Mask(3, 3, 0));
  EXPECT_THROW(sample(m, TokenGrid(3, 3), o, -0.1, 1), Error);
  TokenGrid wrong(3, 3);
  wrong.known[0] = 1;
  EXPECT_THROW(sample(m, wrong, o, 0.5, 1), Error);
}

TEST(Sample, JointFrequenciesMatchEnumeration) {
  const ArConfig cfg{.num_tokens = 3, .embed_dim = 4, .layers = 2, .kernel = 3, .channels = 6};
  ArModel m = randomModel(cfg, 5);
  // Sharpen the head so that the joint is far from uniform.
  m.params().head_weight *= 3.0;
  const GenerationOrder o = ordering::generateOrder(Mask(2, 2, 0));
  const std::vector<int> pos = o.positionsByRank();
  std::map<std::vector<int>, double> joint;
  for (int code = 0; code < 81; ++code) {
    TokenGrid g(2, 2);
    int c = code;
    for (int i = 0; i < 4; ++i) {
      g.tokens[pos[i]] = c % 3;
      c /= 3;
      g.known[pos[i]] = 1;
    }
    const Eigen::MatrixXd logits = forward(m, g, o);
    double pr = 1;
    for (int i = 0; i < 4; ++i) pr *= temperatureSoftmax(logits.col(pos[i]), 1.0)[g.tokens[pos[i]]];
    joint[std::vector<int>(g.tokens.values().begin(), g.tokens.values().end())] = pr;
  }
  double total = 0;
  for (auto& [k, v] : joint) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
  const int n = 20000;
  std::map<std::vector<int>, int> counts;
  for (int s = 0; s < n; ++s) {
    const TokenGrid out = sample(m, TokenGrid(2, 2), o, 1.0, s);
    ++counts[std::vector<int>(out.tokens.values().begin(), out.tokens.values().end())];
  }
  for (auto& [k, pr] : joint) {
    const double expect = n * pr, sigma = std::sqrt(n * pr * (1 - pr));
    EXPECT_LE(std::abs(counts[k] - expect), 3 * sigma + 1e-9);
  }
}

TEST(Softmax, EntropyNonDecreasingInTemperature) {
  Rng rng(15);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd logits(7);
    for (int k = 0; k < 7; ++k) logits[k] = uniformRange(rng, -4, 4);
    double prev = 0;
    for (double temp = 0.0; temp <= 5.0; temp += 0.05) {
      const double h = entropy(temperatureSoftmax(logits, temp));
      EXPECT_GE(h, prev - 1e-12);
      prev = h;
    }
  }
  Eigen::VectorXd tie(3);
  tie << 1, 2, 2;
  EXPECT_EQ(temperatureSoftmax(tie, 0.0), Eigen::Vector3d(0, 1, 0));
  EXPECT_THROW(temperatureSoftmax(tie, -1), Error);
}

TEST(ModelFile, RoundTripAtFloatPrecision) {
  const ArModel m = randomModel(kSmall, 8);
  test::TempDir dir("model");
  saveModel(dir / "m.psar", m);
  const ArModel back = loadModel(dir / "m.psar");
  EXPECT_EQ(back.config(), m.config());
  std::vector<double> a, b;
  m.params().forEachBlock([&](const double* d, size_t n) { a.insert(a.end(), d, d + n); });
  back.params().forEachBlock([&](const double* d, size_t n) { b.insert(b.end(), d, d + n); });
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], static_cast<double>(static_cast<float>(a[i])));
  saveModel(dir / "n.psar", back);
  EXPECT_EQ(loadModel(dir / "n.psar").params().embed, back.params().embed);
  EXPECT_THROW(loadModel(dir / "missing.psar"), Error);
}

TEST(ArParameters, FlatAccessCoversEveryBlock) {
  ArModel m = ArModel::zeros(kSmall);
  const size_t n = m.params().count();
  EXPECT_EQ(n, 6u * 5 + 9u * 7 * 6 + 7 + 2 * (9u * 7 * 7 + 7) + 5u * 7 + 5);
  m.params().at(n - 1) = 3.0;
  EXPECT_EQ(m.params().head_bias[4], 3.0);
  EXPECT_THROW(m.params().at(n), Error);
}
