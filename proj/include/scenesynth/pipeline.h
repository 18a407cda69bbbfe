#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scenesynth/ar_model.h"
#include "scenesynth/codebook.h"
#include "scenesynth/geometry.h"
#include "scenesynth/metrics.h"
#include "scenesynth/selection.h"
#include "scenesynth/world.h"

namespace scenesynth::pipeline {

enum class Strategy { kSupportFirst, kSequential, kNoAccumulation };

std::string strategyName(Strategy s);
Strategy parseStrategy(const std::string& name);
inline bool accumulates(Strategy s) { return s != Strategy::kNoAccumulation; }

struct PipelineConfig {
  geometry::SplatOptions splat;
  int erode_px = 2;
  double known_fraction = 0.5;
  int samples = 8;
  double temperature = 0.5;
  int feather_px = 2;
  int fill_iters = 32;
  double max_hole_fraction = 0.02;
  double yaw_extent = 40.0;
  double pitch_extent = 20.0;
  int sequential_hops = 2;
};

enum class CloudOrigin { kInput, kSupport };

struct TaggedCloud {
  geometry::PointCloud cloud;
  CloudOrigin origin = CloudOrigin::kInput;
};

struct SupportView {
  geometry::Pose pose;
  Image image;  // quantized to 8 bits
  geometry::DepthMap depth;
  int unknown_tokens = 0;
  size_t new_points = 0;
  int cloud_index = -1;  // index into SceneState::clouds, -1 when detached or empty
};

struct SceneInput {
  Image image;
  geometry::DepthMap depth;
  geometry::Pose pose;
};

struct SceneState {
  std::vector<TaggedCloud> clouds;
  geometry::CameraIntrinsics intrinsics;
  geometry::Pose base_pose;
  std::vector<SupportView> support_views;
  Strategy strategy = Strategy::kSupportFirst;
  PipelineConfig config;
  uint64_t seed = 0;
  std::shared_ptr<const vq::Codebook> codebook;
  std::shared_ptr<const ar::ArModel> model;

  size_t pointCount() const;
  size_t inputCount() const;
  // Every cloud merged, in order.
  geometry::PointCloud mergedCloud() const;
};

// Clouds are tagged 0..n-1 in input order; the first input's pose is the base.
SceneState initScene(const std::vector<SceneInput>& inputs, const geometry::CameraIntrinsics& intrinsics,
                     const PipelineConfig& config, uint64_t seed = 0);

// Reprojection color where visible, outpainted color elsewhere (when given),
// a linear cross-blend over a feather_px band on the outpainted side of the
// seam, and frontier filling of anything left.
Image refineComposite(const std::optional<Image>& outpainted, const geometry::RenderResult& reprojection,
                      int feather_px, int fill_iters);

geometry::DepthMap depthFill(const geometry::DepthMap& depth, const Mask& newly_generated, int fill_iters);

struct OutpaintReport {
  int unknown_tokens = 0;
  size_t new_points = 0;
  int selected_sample = -1;
};

struct OutpaintResult {
  Image image;
  geometry::DepthMap depth;
  Mask generated;
  geometry::RenderResult reprojection;
  OutpaintReport report;
};

// Steps (1)-(9) of support outpainting from `cloud`, without touching a state.
OutpaintResult outpaintFrom(const geometry::PointCloud& cloud, const SceneState& state,
                            const geometry::Pose& pose);

// Outpaints the view at `pose`, appends its new points (or keeps them detached
// under NoAccumulation) and records the support view.
OutpaintReport outpaintSupport(SceneState& state, const geometry::Pose& pose);

// Raised when an accumulated render has too many holes.
class CoverageError : public Error {
 public:
  CoverageError(const std::string& nearest_direction, double hole_fraction);
  const std::string& nearestDirection() const { return direction_; }
  double holeFraction() const { return hole_fraction_; }

 private:
  std::string direction_;
  double hole_fraction_;
};

struct ViewRender {
  Image image;
  Grid<uint16_t> source;  // provenance tag per pixel
  double coverage_fraction = 0;
  bool outpainted = false;
};

ViewRender renderView(const SceneState& state, const geometry::Pose& pose);

// The eight support directions as (name, yaw sign, pitch sign), in synthesis order.
struct Direction {
  const char* name;
  int yaw_sign;
  int pitch_sign;
};
const std::array<Direction, 8>& supportDirections();

// Direction whose extremal support lies closest to `pose`, seen from the base.
std::string nearestDirection(const SceneState& state, const geometry::Pose& pose);

using ProgressFn = std::function<void(int index, const std::string& direction, const OutpaintReport&)>;

void synthesizePanorama(SceneState& state, double yaw_extent, double pitch_extent,
                        const ProgressFn& progress = {});

// Renders the half and full (yaw, pitch) turns from the base pose through
// renderView and scores their agreement.
metrics::ConsistencyReport consistencyEval(const SceneState& state, double yaw_deg, double pitch_deg);

std::vector<world::CurriculumStage> curriculumSchedule(double base_rot, double target_rot, int stage_len);

}  // namespace scenesynth::pipeline
