#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "scenesynth/image.h"

namespace scenesynth::geometry {

// Pinhole camera. Pixel (u, v) has its center at integer coordinates.
struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
  Eigen::Matrix3d matrix() const;
  // Same camera with `margin` extra pixels on every side.
  CameraIntrinsics padded(int margin) const;
  bool operator==(const CameraIntrinsics&) const = default;
};

// Rigid transform, world <- camera.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }
  void validate() const;
};

Pose composePose(const Pose& a, const Pose& b);
Pose invertPose(const Pose& p);

// Yaw turns right (+x), pitch looks up (-y). Camera axes: x right, y down, z forward.
Eigen::Matrix3d yawPitchRotation(double yaw_deg, double pitch_deg);
// base, turned by (yaw, pitch) about its own center, then moved `step` meters
// along the resulting viewing direction.
Pose lookPose(const Pose& base, double yaw_deg, double pitch_deg, double step = 0.0);
// Rotation angle of R in degrees.
double rotationAngleDeg(const Eigen::Matrix3d& rotation);
bool isRotation(const Eigen::Matrix3d& rotation, double tolerance);

struct DepthMap {
  Grid<double> values;  // meters along camera z
  Mask valid;

  DepthMap() = default;
  DepthMap(int height, int width) : values(height, width, 0.0), valid(height, width, 0) {}
  int height() const { return values.height(); }
  int width() const { return values.width(); }
  void validate() const;
};

inline constexpr uint16_t kNoSource = 0xFFFF;

// Colored points in the world frame. Stored at file precision so that a
// save/load cycle is lossless.
struct PointCloud {
  std::vector<Eigen::Vector3f> positions;
  std::vector<Rgb8> colors;
  std::vector<uint16_t> source;

  size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  void append(const PointCloud& other);
  void validate() const;
  bool operator==(const PointCloud&) const = default;
};

struct RenderResult {
  Image image;            // normalized by coverage
  Grid<float> coverage;   // composited opacity
  Mask visible;
  Grid<float> depth;      // composited depth, meters
  Grid<uint16_t> source;  // source tag of the front-most composited point

  int height() const { return image.height(); }
  int width() const { return image.width(); }
};

struct SplatOptions {
  int radius_px = 4;
  int points_per_pixel = 8;
  // Candidates no farther than (1 + depth_tolerance) times the pixel's
  // reference depth form the front surface and are composited nearest-first.
  double depth_tolerance = 0.1;
  double coverage_threshold = 0.5;
};

PointCloud unproject(const Image& image, const DepthMap& depth, const CameraIntrinsics& intrinsics,
                     const Pose& pose, uint16_t source_id = 0);

// Soft z-buffer point renderer. `visible` is coverage >= options.coverage_threshold
// with no erosion; use trimBorder for silhouette trimming.
RenderResult splatRender(const PointCloud& cloud, const CameraIntrinsics& intrinsics,
                         const Pose& pose, const SplatOptions& options = {});

RenderResult trimBorder(const RenderResult& result, double coverage_threshold, int erode_px);

// Crops `margin` pixels from every side.
RenderResult cropResult(const RenderResult& result, int margin);

// Renders with an erode_px margin, trims, and crops back to the intrinsics'
// frame, so that only silhouettes (not the frame edge) are eroded.
RenderResult renderTrimmed(const PointCloud& cloud, const CameraIntrinsics& intrinsics,
                           const Pose& pose, const SplatOptions& options, int erode_px);

// Pixel homography from view 1 to view 2 for cameras sharing intrinsics and center.
Eigen::Matrix3d rotationHomography(const CameraIntrinsics& intrinsics,
                                   const Eigen::Matrix3d& rotation_2_from_1);
// Relative rotation taking camera-1 coordinates to camera-2 coordinates.
Eigen::Matrix3d relativeRotation(const Pose& from, const Pose& to);

}  // namespace scenesynth::geometry
