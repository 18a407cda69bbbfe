#include "scenesynth/pipeline.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scenesynth/ordering.h"
#include "scenesynth/parallel.h"

namespace scenesynth::pipeline {

using geometry::CameraIntrinsics;
using geometry::DepthMap;
using geometry::PointCloud;
using geometry::Pose;
using geometry::RenderResult;

namespace {

// Provenance tag for pixels outpainted on the fly and never stored.
constexpr uint16_t kTransientSource = 0xFFFE;

}  // namespace

std::string strategyName(Strategy s) {
  switch (s) {
    case Strategy::kSupportFirst: return "support_first";
    case Strategy::kSequential: return "sequential";
    case Strategy::kNoAccumulation: return "no_accumulation";
  }
  return "unknown";
}

Strategy parseStrategy(const std::string& name) {
  for (Strategy s : {Strategy::kSupportFirst, Strategy::kSequential, Strategy::kNoAccumulation}) {
    if (strategyName(s) == name) return s;
  }
  throw Error("unknown strategy '" + name + "' (expected support_first, sequential or no_accumulation)");
}

size_t SceneState::pointCount() const {
  size_t n = 0;
  for (const auto& c : clouds) n += c.cloud.size();
  return n;
}

size_t SceneState::inputCount() const {
  return static_cast<size_t>(std::count_if(clouds.begin(), clouds.end(),
                                           [](const TaggedCloud& c) { return c.origin == CloudOrigin::kInput; }));
}

PointCloud SceneState::mergedCloud() const {
  PointCloud merged;
  for (const auto& c : clouds) merged.append(c.cloud);
  return merged;
}

SceneState initScene(const std::vector<SceneInput>& inputs, const CameraIntrinsics& intrinsics,
                     const PipelineConfig& config, uint64_t seed) {
  SS_CHECK(!inputs.empty(), "initScene: no inputs");
  intrinsics.validate();
  SceneState state;
  state.intrinsics = intrinsics;
  state.base_pose = inputs.front().pose;
  state.config = config;
  state.seed = seed;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const SceneInput& in = inputs[i];
    SS_CHECK(in.image.height() == intrinsics.height && in.image.width() == intrinsics.width,
             "initScene: input size does not match the intrinsics");
    state.clouds.push_back(
        {geometry::unproject(in.image, in.depth, intrinsics, in.pose, static_cast<uint16_t>(i)),
         CloudOrigin::kInput});
  }
  return state;
}

Image refineComposite(const std::optional<Image>& outpainted, const RenderResult& reprojection,
                      int feather_px, int fill_iters) {
  SS_CHECK(feather_px >= 0 && fill_iters >= 0, "refineComposite: negative feather or fill");
  const Mask& visible = reprojection.visible;
  const int h = reprojection.height(), w = reprojection.width();
  Image out(h, w, Color::Zero());

  if (outpainted) {
    SS_CHECK(outpainted->sameShape(reprojection.image), "refineComposite: shape mismatch");
    Image extended = reprojection.image;
    Mask defined = visible;
    frontierFill(extended, defined, feather_px);
    const Grid<int> dist = chebyshevDistance(visible, feather_px + 1);
    for (size_t i = 0; i < out.size(); ++i) {
      if (visible[i]) {
        out[i] = reprojection.image[i];
      } else if (dist[i] <= feather_px && defined[i]) {
        const float t = static_cast<float>(dist[i]) / static_cast<float>(feather_px + 1);
        out[i] = extended[i] * (1.f - t) + (*outpainted)[i] * t;
      } else {
        out[i] = (*outpainted)[i];
      }
    }
    return out;
  }

  Mask defined = visible;
  for (size_t i = 0; i < out.size(); ++i)
    if (visible[i]) out[i] = reprojection.image[i];
  frontierFill(out, defined, fill_iters);
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  size_t n = 0;
  for (size_t i = 0; i < out.size(); ++i) {
    if (defined[i]) {
      sum += out[i].cast<double>();
      ++n;
    }
  }
  const Color mean = n > 0 ? Color((sum / static_cast<double>(n)).cast<float>()) : Color::Zero();
  for (size_t i = 0; i < out.size(); ++i)
    if (!defined[i]) out[i] = mean;
  return out;
}

DepthMap depthFill(const DepthMap& depth, const Mask& newly_generated, int fill_iters) {
  depth.validate();
  SS_CHECK(depth.values.sameShape(newly_generated), "depthFill: shape mismatch");
  std::vector<double> observed;
  for (size_t i = 0; i < depth.values.size(); ++i)
    if (depth.valid[i]) observed.push_back(depth.values[i]);
  SS_CHECK(!observed.empty(), "depthFill: no valid depth");
  const auto [lo, hi] = std::minmax_element(observed.begin(), observed.end());
  const double min_depth = *lo, max_depth = *hi;
  std::nth_element(observed.begin(), observed.begin() + observed.size() / 2, observed.end());
  const double median = observed[observed.size() / 2];

  DepthMap out = depth;
  Mask fillable(depth.height(), depth.width(), 0);
  for (size_t i = 0; i < fillable.size(); ++i) fillable[i] = newly_generated[i] && !depth.valid[i];
  Mask defined = depth.valid;
  frontierFill(out.values, defined, fill_iters, &fillable);
  for (size_t i = 0; i < out.values.size(); ++i) {
    if (!fillable[i]) continue;
    if (!defined[i]) out.values[i] = median;
    out.values[i] = std::clamp(out.values[i], min_depth, max_depth);
    out.valid[i] = 1;
  }
  return out;
}

namespace {

DepthMap toDepthMap(const RenderResult& r) {
  DepthMap d(r.height(), r.width());
  for (size_t i = 0; i < d.values.size(); ++i) {
    if (r.visible[i] && r.depth[i] > 0) {
      d.values[i] = r.depth[i];
      d.valid[i] = 1;
    }
  }
  return d;
}

void requireModels(const SceneState& state) {
  SS_CHECK(state.codebook != nullptr, "outpaint: no codebook loaded");
  SS_CHECK(state.model != nullptr, "outpaint: no AR model loaded");
  SS_CHECK(state.model->config().num_tokens == state.codebook->size(),
           "outpaint: model and codebook disagree on K");
}

}  // namespace

OutpaintResult outpaintFrom(const PointCloud& cloud, const SceneState& state, const Pose& pose) {
  requireModels(state);
  const PipelineConfig& cfg = state.config;
  SS_CHECK(cfg.samples >= 1, "outpaint: samples must be >= 1");
  OutpaintResult res;
  res.reprojection = geometry::renderTrimmed(cloud, state.intrinsics, pose, cfg.splat, cfg.erode_px);
  const vq::TokenGrid partial =
      vq::encode(res.reprojection.image, res.reprojection.visible, *state.codebook, cfg.known_fraction);
  const ordering::GenerationOrder order = ordering::generateOrder(partial.known);
  res.report.unknown_tokens = order.backgroundCount();
  const int h = state.intrinsics.height, w = state.intrinsics.width;

  if (res.report.unknown_tokens == 0) {
    res.image = quantize8(refineComposite(std::nullopt, res.reprojection, cfg.feather_px, cfg.fill_iters));
    res.depth = toDepthMap(res.reprojection);
    res.generated = Mask(h, w, 0);
    return res;
  }

  const selection::Scorers scorers = selection::Scorers::proxies(*state.model);
  std::vector<vq::TokenGrid> grids(cfg.samples);
  std::vector<selection::ScoredSample> scored(cfg.samples);
  parallelFor(0, cfg.samples, [&](int i) {
    grids[i] = ar::sample(*state.model, partial, order, cfg.temperature, state.seed + static_cast<uint64_t>(i));
    scored[i] = {i, scorers.detail(vq::decode(grids[i], *state.codebook)), scorers.entropy(grids[i], order)};
  });
  res.report.selected_sample = selection::rankCombine(scored);

  const Image outpainted = vq::decode(grids[res.report.selected_sample], *state.codebook);
  res.image = quantize8(refineComposite(outpainted, res.reprojection, cfg.feather_px, cfg.fill_iters));
  res.generated = Mask(h, w, 0);
  for (size_t i = 0; i < res.generated.size(); ++i) res.generated[i] = !res.reprojection.visible[i];
  res.depth = depthFill(toDepthMap(res.reprojection), res.generated, cfg.fill_iters);
  return res;
}

OutpaintReport outpaintSupport(SceneState& state, const Pose& pose) {
  requireModels(state);
  pose.validate();
  const size_t tag = state.inputCount() + state.support_views.size();
  SS_CHECK(tag < kTransientSource, "outpaint: too many sources");
  OutpaintResult res = outpaintFrom(state.mergedCloud(), state, pose);

  SupportView view;
  view.pose = pose;
  view.image = res.image;
  view.depth = res.depth;
  view.unknown_tokens = res.report.unknown_tokens;
  if (res.report.unknown_tokens > 0) {
    DepthMap fresh = res.depth;
    for (size_t i = 0; i < fresh.valid.size(); ++i) fresh.valid[i] = res.generated[i] && res.depth.valid[i];
    PointCloud points = geometry::unproject(res.image, fresh, state.intrinsics, pose, static_cast<uint16_t>(tag));
    res.report.new_points = points.size();
    view.new_points = points.size();
    if (accumulates(state.strategy) && !points.empty()) {
      view.cloud_index = static_cast<int>(state.clouds.size());
      state.clouds.push_back({std::move(points), CloudOrigin::kSupport});
    }
  }
  state.support_views.push_back(std::move(view));
  return res.report;
}

CoverageError::CoverageError(const std::string& nearest_direction, double hole_fraction)
    : Error("insufficient support coverage (nearest support direction: " + nearest_direction + ")"),
      direction_(nearest_direction),
      hole_fraction_(hole_fraction) {}

namespace {

// Holes inherit the tag of a defined 8-neighbor, growing outward round by round.
void fillSourceTags(Grid<uint16_t>& tags, Mask defined) {
  const int h = tags.height(), w = tags.width();
  for (bool progress = true; progress;) {
    progress = false;
    Mask next = defined;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (defined(r, c)) continue;
        for (int dr = -1; dr <= 1 && !next(r, c); ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (tags.inBounds(r + dr, c + dc) && defined(r + dr, c + dc)) {
              tags(r, c) = tags(r + dr, c + dc);
              next(r, c) = 1;
              progress = true;
              break;
            }
          }
        }
      }
    }
    defined = std::move(next);
  }
}

}  // namespace

ViewRender renderView(const SceneState& state, const Pose& pose) {
  pose.validate();
  const PipelineConfig& cfg = state.config;
  ViewRender out;
  if (!accumulates(state.strategy)) {
    const OutpaintResult res = outpaintFrom(state.mergedCloud(), state, pose);
    out.image = res.image;
    out.source = res.reprojection.source;
    for (size_t i = 0; i < out.source.size(); ++i)
      if (res.generated[i]) out.source[i] = kTransientSource;
    Mask defined(res.generated.height(), res.generated.width(), 0);
    for (size_t i = 0; i < defined.size(); ++i)
      defined[i] = res.generated[i] || res.reprojection.visible[i];
    fillSourceTags(out.source, defined);
    out.coverage_fraction = static_cast<double>(countTrue(res.reprojection.visible)) /
                            static_cast<double>(res.reprojection.visible.size());
    out.outpainted = res.report.unknown_tokens > 0;
    return out;
  }

  const RenderResult reproj = geometry::renderTrimmed(state.mergedCloud(), state.intrinsics, pose, cfg.splat, 0);
  out.coverage_fraction =
      static_cast<double>(countTrue(reproj.visible)) / static_cast<double>(reproj.visible.size());
  const double holes = 1.0 - out.coverage_fraction;
  if (holes > cfg.max_hole_fraction) throw CoverageError(nearestDirection(state, pose), holes);
  out.image = quantize8(refineComposite(std::nullopt, reproj, cfg.feather_px, cfg.fill_iters));
  out.source = reproj.source;
  fillSourceTags(out.source, reproj.visible);
  return out;
}

const std::array<Direction, 8>& supportDirections() {
  static const std::array<Direction, 8> kDirections = {{{"up", 0, 1},
                                                        {"left", -1, 0},
                                                        {"down", 0, -1},
                                                        {"right", 1, 0},
                                                        {"up-left", -1, 1},
                                                        {"up-right", 1, 1},
                                                        {"down-left", -1, -1},
                                                        {"down-right", 1, -1}}};
  return kDirections;
}

std::string nearestDirection(const SceneState& state, const Pose& pose) {
  const Eigen::Vector3d f = state.base_pose.rotation.transpose() * pose.rotation * Eigen::Vector3d::UnitZ();
  const double yaw = std::atan2(f.x(), f.z()) * 180.0 / std::numbers::pi;
  const double pitch = std::atan2(-f.y(), std::hypot(f.x(), f.z())) * 180.0 / std::numbers::pi;
  const double a = yaw / std::max(state.config.yaw_extent, 1e-6);
  const double b = pitch / std::max(state.config.pitch_extent, 1e-6);
  std::string best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const Direction& d : supportDirections()) {
    const double dist = std::hypot(a - d.yaw_sign, b - d.pitch_sign);
    if (dist < best_dist) {
      best_dist = dist;
      best = d.name;
    }
  }
  return best;
}

void synthesizePanorama(SceneState& state, double yaw_extent, double pitch_extent, const ProgressFn& progress) {
  SS_CHECK(yaw_extent >= 0 && pitch_extent >= 0, "synthesizePanorama: extents must be >= 0");
  const int hops = state.strategy == Strategy::kSequential ? state.config.sequential_hops : 1;
  SS_CHECK(hops >= 1, "synthesizePanorama: sequential_hops must be >= 1");
  int index = 0;
  for (const Direction& d : supportDirections()) {
    OutpaintReport report;
    for (int hop = 1; hop <= hops; ++hop) {
      const double f = static_cast<double>(hop) / hops;
      report = outpaintSupport(state, geometry::lookPose(state.base_pose, d.yaw_sign * yaw_extent * f,
                                                         d.pitch_sign * pitch_extent * f));
    }
    if (progress) progress(index, d.name, report);
    ++index;
  }
}

metrics::ConsistencyReport consistencyEval(const SceneState& state, double yaw_deg, double pitch_deg) {
  return metrics::consistencyEval([&](const Pose& p) { return renderView(state, p).image; },
                                  state.intrinsics, state.base_pose, yaw_deg, pitch_deg);
}

std::vector<world::CurriculumStage> curriculumSchedule(double base_rot, double target_rot, int stage_len) {
  SS_CHECK(base_rot > 0 && base_rot <= target_rot, "curriculum: need 0 < base <= target");
  SS_CHECK(stage_len >= 0, "curriculum: stage length must be >= 0");
  std::vector<world::CurriculumStage> stages;
  for (int k = 1;; ++k) {
    const double rot = k * base_rot;
    if (rot >= target_rot - 1e-9) {
      stages.push_back({target_rot, stage_len});
      break;
    }
    stages.push_back({rot, stage_len});
  }
  return stages;
}

}  // namespace scenesynth::pipeline
