#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "scenesynth/ar_model.h"
#include "scenesynth/pipeline.h"
#include "scenesynth/world.h"

namespace scenesynth::training {

struct TrainOptions {
  double lr = 1.0;
  int batch = 60;
  uint64_t seed = 1;
};

struct StepLog {
  int step = 0;
  int stage = 0;
  double max_rotation_deg = 0;
  double loss = 0;
};

// Runs the stages in order; during stage s each batch is drawn uniformly (with
// replacement) from the examples of stages 0..s.
void trainCurriculum(ar::ArModel& model, const std::vector<world::CorpusExample>& examples,
                     const std::vector<world::CurriculumStage>& curriculum, const TrainOptions& options,
                     const std::function<void(const StepLog&)>& log = {});

// Reassigns every example to the first stage whose maximum rotation covers its
// pair rotation; examples beyond the last stage are dropped.
std::vector<world::CorpusExample> restage(std::vector<world::CorpusExample> examples,
                                          const std::vector<world::CurriculumStage>& curriculum);

// Every `every`-th example (index % every == every - 1) is held out.
std::pair<std::vector<world::CorpusExample>, std::vector<world::CorpusExample>> splitHeldOut(
    const std::vector<world::CorpusExample>& examples, int every = 5);

// Mean of the per-example nll.
double meanNll(const ar::ArModel& model, const std::vector<world::CorpusExample>& examples);

// Rendered views used to fit a codebook: per room, eight yaws at three pitches
// from the camera start.
std::vector<Image> codebookImages(const std::vector<world::RoomSpec>& rooms,
                                  const geometry::CameraIntrinsics& intrinsics);

// The procedural rooms used as the shipped fixture set.
std::vector<world::RoomSpec> fixtureRooms(int count, uint64_t first_seed = 1000);

// A room's view from its camera start, quantized to 8 bits: the single input of
// a fixture scene.
pipeline::SceneInput fixtureInput(const world::RoomSpec& room, const geometry::CameraIntrinsics& intrinsics);

// First room seed of the consistency evaluation scenes (disjoint from the
// training fixtures).
inline constexpr uint64_t kEvalSeedBase = 2000;

// Consistency evaluation scene `index`: room kEvalSeedBase + index, scene seed
// `index`, panorama synthesized under `strategy` at the config's extents.
pipeline::SceneState fixtureScene(int index, pipeline::Strategy strategy, const pipeline::PipelineConfig& config,
                                  std::shared_ptr<const vq::Codebook> codebook,
                                  std::shared_ptr<const ar::ArModel> model);

}  // namespace scenesynth::training
