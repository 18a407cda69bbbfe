#pragma once

#include <functional>

#include <Eigen/Core>

#include "scenesynth/geometry.h"
#include "scenesynth/image.h"

namespace scenesynth::metrics {

// Stands in for +infinity when two images agree exactly.
inline constexpr double kPsnrInfinity = 999.0;

// 10 log10(1 / MSE) over masked pixels and all channels, peak 1.
double psnr(const Image& a, const Image& b, const Mask& mask);

struct WarpResult {
  Image image;
  Mask valid;  // source coordinate inside the source frame
};

// Inverse warp with bilinear sampling; `homography` maps source pixels to
// output pixels.
WarpResult warpByHomography(const Image& image, const Eigen::Matrix3d& homography, int out_height,
                            int out_width);

struct ConsistencyReport {
  double psnr_extreme_to_mid = 0;
  double psnr_mid_to_extreme = 0;
  double mean = 0;
  double overlap_extreme_to_mid = 0;
  double overlap_mid_to_extreme = 0;
};

inline constexpr double kMinOverlap = 0.05;

// Scores two renders of a pure rotation pair against each other in both
// directions.
ConsistencyReport consistencyFromViews(const Image& mid, const geometry::Pose& mid_pose,
                                       const Image& extreme, const geometry::Pose& extreme_pose,
                                       const geometry::CameraIntrinsics& intrinsics);

using ViewRenderer = std::function<Image(const geometry::Pose&)>;

// Renders the half-rotation and full-rotation views from `base` and scores them.
ConsistencyReport consistencyEval(const ViewRenderer& render, const geometry::CameraIntrinsics& intrinsics,
                                  const geometry::Pose& base, double yaw_deg, double pitch_deg);

}  // namespace scenesynth::metrics
