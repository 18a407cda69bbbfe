#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scenesynth/codebook.h"
#include "scenesynth/ordering.h"

namespace scenesynth::ar {

struct ArConfig {
  int num_tokens = 128;
  int embed_dim = 32;
  int layers = 4;
  int kernel = 3;
  int channels = 64;

  void validate() const;
  int taps() const { return kernel * kernel; }
  bool operator==(const ArConfig&) const = default;
};

// Parameters in declaration order: embedding, then per layer the tap weights and
// bias, then the 1x1 head. Gradients use the same type.
struct ArParameters {
  Eigen::MatrixXd embed;                              // E x K, one column per token
  std::vector<std::vector<Eigen::MatrixXd>> weights;  // [layer][tap], C_out x C_in
  std::vector<Eigen::VectorXd> biases;                // [layer]
  Eigen::MatrixXd head_weight;                        // K x C
  Eigen::VectorXd head_bias;                          // K

  static ArParameters zeros(const ArConfig& config);

  // Visits every parameter block as a contiguous span of doubles.
  void forEachBlock(const std::function<void(double*, size_t)>& fn);
  void forEachBlock(const std::function<void(const double*, size_t)>& fn) const;
  size_t count() const;
  // Flat access in declaration order (slow; for tests and gradient checks).
  double& at(size_t index);
};

class ArModel {
 public:
  ArModel() = default;
  // Uniform(-a, a) weights with a = 1/sqrt(fan_in), zero biases.
  ArModel(const ArConfig& config, uint64_t seed);
  static ArModel zeros(const ArConfig& config);

  const ArConfig& config() const { return config_; }
  ArParameters& params() { return params_; }
  const ArParameters& params() const { return params_; }

 private:
  ArConfig config_;
  ArParameters params_;
};

// A teacher-forcing example: tokens are defined everywhere; the loss covers the
// background positions of `order`.
struct TrainExample {
  vq::TokenGrid grid;
  ordering::GenerationOrder order;
};
using TrainBatch = std::vector<TrainExample>;

// Logits as a K x (h*w) matrix, column = row-major position.
Eigen::MatrixXd forward(const ArModel& model, const vq::TokenGrid& tokens,
                        const ordering::GenerationOrder& order);
Eigen::MatrixXd forward(const ArModel& model, const vq::TokenGrid& tokens,
                        const ordering::LocalMaskSet& masks);

// Sum of cross-entropy over background positions; accumulates d(sum)/d(params)
// scaled by `scale` into `grad` when non-null. Returns the number of positions.
double crossEntropy(const ArModel& model, const TrainExample& example, ArParameters* grad,
                    double scale, int* positions = nullptr);

// Mean cross-entropy over background positions of a fully known grid; 0 when
// there are none.
double nll(const ArModel& model, const vq::TokenGrid& grid, const ordering::GenerationOrder& order);

// Mean background cross-entropy of the batch and its gradient.
double lossAndGradient(const ArModel& model, const TrainBatch& batch, ArParameters& grad);

// One plain gradient-descent step; returns the pre-update loss.
double trainStep(ArModel& model, const TrainBatch& batch, double lr);

enum class SampleMode { kIncremental, kNaive };

// Generates every background position in rank order. Temperature 0 is argmax
// with ties to the lowest index.
vq::TokenGrid sample(const ArModel& model, const vq::TokenGrid& partial,
                     const ordering::GenerationOrder& order, double temperature, uint64_t seed,
                     SampleMode mode = SampleMode::kIncremental);

// Probability vector of softmax(logits / temperature); temperature 0 is a one-hot
// argmax.
Eigen::VectorXd temperatureSoftmax(const Eigen::VectorXd& logits, double temperature);
double entropy(const Eigen::VectorXd& probs);

// "PSAR", u32 version, u32 K, E, layers, kernel, channels, then f32 parameters.
void saveModel(const std::string& path, const ArModel& model);
ArModel loadModel(const std::string& path);

}  // namespace scenesynth::ar
