#pragma once

#include <memory>

#include "scenesynth/pipeline.h"
#include "scenesynth/training.h"

namespace scenesynth::test {

// Small untrained model and codebook: exercises the pipeline mechanics quickly.
struct SmallModels {
  std::shared_ptr<const vq::Codebook> codebook;
  std::shared_ptr<const ar::ArModel> model;
};

inline const SmallModels& smallModels() {
  static const SmallModels m = [] {
    SmallModels s;
    s.codebook = std::make_shared<const vq::Codebook>(vq::fitCodebook(
        training::codebookImages(training::fixtureRooms(2), world::defaultIntrinsics()), 16, 4, 7));
    s.model = std::make_shared<const ar::ArModel>(
        ar::ArConfig{.num_tokens = 16, .embed_dim = 8, .layers = 2, .kernel = 3, .channels = 16}, 5);
    return s;
  }();
  return m;
}

inline pipeline::PipelineConfig smallConfig() {
  pipeline::PipelineConfig cfg;
  cfg.samples = 3;
  return cfg;
}

inline pipeline::SceneState smallScene(uint64_t room_seed, pipeline::Strategy strategy,
                                       const pipeline::PipelineConfig& config = smallConfig(), uint64_t seed = 0) {
  const auto k = world::defaultIntrinsics();
  pipeline::SceneState s =
      pipeline::initScene({training::fixtureInput(world::RoomSpec::procedural(room_seed), k)}, k, config, seed);
  s.strategy = strategy;
  s.codebook = smallModels().codebook;
  s.model = smallModels().model;
  return s;
}

}  // namespace scenesynth::test
