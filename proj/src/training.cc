#include "scenesynth/training.h"

#include "scenesynth/parallel.h"
#include "scenesynth/rng.h"

namespace scenesynth::training {

void trainCurriculum(ar::ArModel& model, const std::vector<world::CorpusExample>& examples,
                     const std::vector<world::CurriculumStage>& curriculum, const TrainOptions& options,
                     const std::function<void(const StepLog&)>& log) {
  SS_CHECK(options.batch >= 1, "train: batch must be >= 1");
  SS_CHECK(options.lr >= 0, "train: lr must be >= 0");
  Rng rng(options.seed);
  int step = 0;
  for (size_t s = 0; s < curriculum.size(); ++s) {
    std::vector<size_t> pool;
    for (size_t i = 0; i < examples.size(); ++i)
      if (examples[i].stage <= static_cast<int>(s)) pool.push_back(i);
    SS_CHECK(!pool.empty() || curriculum[s].iterations == 0,
             "train: no examples available for curriculum stage " + std::to_string(s));
    for (int it = 0; it < curriculum[s].iterations; ++it, ++step) {
      ar::TrainBatch batch;
      for (int b = 0; b < options.batch; ++b) {
        const world::CorpusExample& ex = examples[pool[uniformIndex(rng, pool.size())]];
        batch.push_back({ex.trainingGrid(), ex.order});
      }
      const double loss = ar::trainStep(model, batch, options.lr);
      if (log) log({step, static_cast<int>(s), curriculum[s].max_rotation_deg, loss});
    }
  }
}

std::vector<world::CorpusExample> restage(std::vector<world::CorpusExample> examples,
                                          const std::vector<world::CurriculumStage>& curriculum) {
  std::vector<world::CorpusExample> kept;
  for (auto& ex : examples) {
    for (size_t s = 0; s < curriculum.size(); ++s) {
      if (ex.rotation_deg <= curriculum[s].max_rotation_deg + 1e-6) {
        ex.stage = static_cast<int>(s);
        kept.push_back(std::move(ex));
        break;
      }
    }
  }
  return kept;
}

std::pair<std::vector<world::CorpusExample>, std::vector<world::CorpusExample>> splitHeldOut(
    const std::vector<world::CorpusExample>& examples, int every) {
  SS_CHECK(every >= 2, "splitHeldOut: every must be >= 2");
  std::pair<std::vector<world::CorpusExample>, std::vector<world::CorpusExample>> out;
  for (size_t i = 0; i < examples.size(); ++i)
    (static_cast<int>(i % every) == every - 1 ? out.second : out.first).push_back(examples[i]);
  return out;
}

double meanNll(const ar::ArModel& model, const std::vector<world::CorpusExample>& examples) {
  SS_CHECK(!examples.empty(), "meanNll: no examples");
  std::vector<double> values(examples.size());
  parallelFor(0, static_cast<int>(examples.size()), [&](int i) {
    values[i] = ar::nll(model, examples[i].trainingGrid(), examples[i].order);
  });
  double total = 0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

std::vector<Image> codebookImages(const std::vector<world::RoomSpec>& rooms,
                                  const geometry::CameraIntrinsics& intrinsics) {
  std::vector<Image> images;
  for (const auto& room : rooms) {
    const geometry::Pose start{Eigen::Matrix3d::Identity(), room.camera_start};
    for (int pitch : {-20, 0, 20}) {
      for (int k = 0; k < 8; ++k) {
        images.push_back(world::raycastRender(room, intrinsics, geometry::lookPose(start, 45.0 * k, pitch)).image);
      }
    }
  }
  return images;
}

std::vector<world::RoomSpec> fixtureRooms(int count, uint64_t first_seed) {
  std::vector<world::RoomSpec> rooms;
  for (int i = 0; i < count; ++i) rooms.push_back(world::RoomSpec::procedural(first_seed + static_cast<uint64_t>(i)));
  return rooms;
}

pipeline::SceneInput fixtureInput(const world::RoomSpec& room, const geometry::CameraIntrinsics& intrinsics) {
  pipeline::SceneInput input;
  input.pose = {Eigen::Matrix3d::Identity(), room.camera_start};
  const world::RgbdFrame frame = world::raycastRender(room, intrinsics, input.pose);
  input.image = quantize8(frame.image);
  input.depth = frame.depth;
  return input;
}

pipeline::SceneState fixtureScene(int index, pipeline::Strategy strategy, const pipeline::PipelineConfig& config,
                                  std::shared_ptr<const vq::Codebook> codebook,
                                  std::shared_ptr<const ar::ArModel> model) {
  SS_CHECK(index >= 0, "fixtureScene: index must be >= 0");
  const world::RoomSpec room = world::RoomSpec::procedural(kEvalSeedBase + static_cast<uint64_t>(index));
  const geometry::CameraIntrinsics k = world::defaultIntrinsics();
  pipeline::SceneState state = pipeline::initScene({fixtureInput(room, k)}, k, config, static_cast<uint64_t>(index));
  state.strategy = strategy;
  state.codebook = std::move(codebook);
  state.model = std::move(model);
  pipeline::synthesizePanorama(state, config.yaw_extent, config.pitch_extent);
  return state;
}

}  // namespace scenesynth::training
