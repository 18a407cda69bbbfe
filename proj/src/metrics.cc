#include "scenesynth/metrics.h"

#include <cmath>

#include <Eigen/Dense>

namespace scenesynth::metrics {

double psnr(const Image& a, const Image& b, const Mask& mask) {
  SS_CHECK(a.sameShape(b) && a.sameShape(mask), "psnr: shape mismatch");
  double sum = 0;
  size_t n = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!mask[i]) continue;
    sum += (a[i] - b[i]).cast<double>().squaredNorm();
    n += 3;
  }
  SS_CHECK(n > 0, "psnr: empty mask");
  const double mse = sum / static_cast<double>(n);
  if (mse == 0) return kPsnrInfinity;
  return std::min(10.0 * std::log10(1.0 / mse), kPsnrInfinity);
}

WarpResult warpByHomography(const Image& image, const Eigen::Matrix3d& homography, int out_height,
                            int out_width) {
  SS_CHECK(homography.allFinite(), "warpByHomography: non-finite homography");
  const double det = homography.determinant();
  SS_CHECK(std::abs(det) > 1e-12 * std::max(1.0, homography.cwiseAbs().maxCoeff()),
           "warpByHomography: singular homography");
  const Eigen::Matrix3d inv = homography.inverse();
  const int h = image.height(), w = image.width();
  WarpResult out{Image(out_height, out_width, Color::Zero()), Mask(out_height, out_width, 0)};
  constexpr double kEps = 1e-9;
  for (int r = 0; r < out_height; ++r) {
    for (int c = 0; c < out_width; ++c) {
      const Eigen::Vector3d src = inv * Eigen::Vector3d(c, r, 1.0);
      if (src.z() <= 0) continue;
      double x = src.x() / src.z(), y = src.y() / src.z();
      if (!(x >= -kEps && y >= -kEps && x <= w - 1 + kEps && y <= h - 1 + kEps)) continue;
      x = std::clamp(x, 0.0, static_cast<double>(w - 1));
      y = std::clamp(y, 0.0, static_cast<double>(h - 1));
      const int x0 = std::min(static_cast<int>(x), w - 1), y0 = std::min(static_cast<int>(y), h - 1);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const float fx = static_cast<float>(x - x0), fy = static_cast<float>(y - y0);
      out.image(r, c) = (image(y0, x0) * (1 - fx) + image(y0, x1) * fx) * (1 - fy) +
                        (image(y1, x0) * (1 - fx) + image(y1, x1) * fx) * fy;
      out.valid(r, c) = 1;
    }
  }
  return out;
}

namespace {

double directionalScore(const Image& from, const geometry::Pose& from_pose, const Image& to,
                        const geometry::Pose& to_pose, const geometry::CameraIntrinsics& intrinsics,
                        double& overlap) {
  const Eigen::Matrix3d hom =
      geometry::rotationHomography(intrinsics, geometry::relativeRotation(from_pose, to_pose));
  const WarpResult warped = warpByHomography(from, hom, to.height(), to.width());
  overlap = static_cast<double>(countTrue(warped.valid)) / static_cast<double>(warped.valid.size());
  SS_CHECK(overlap >= kMinOverlap, "insufficient overlap");
  return psnr(warped.image, to, warped.valid);
}

}  // namespace

ConsistencyReport consistencyFromViews(const Image& mid, const geometry::Pose& mid_pose,
                                       const Image& extreme, const geometry::Pose& extreme_pose,
                                       const geometry::CameraIntrinsics& intrinsics) {
  SS_CHECK((mid_pose.translation - extreme_pose.translation).norm() < 1e-9,
           "consistency: views must share a camera center");
  ConsistencyReport report;
  report.psnr_extreme_to_mid =
      directionalScore(extreme, extreme_pose, mid, mid_pose, intrinsics, report.overlap_extreme_to_mid);
  report.psnr_mid_to_extreme =
      directionalScore(mid, mid_pose, extreme, extreme_pose, intrinsics, report.overlap_mid_to_extreme);
  report.mean = 0.5 * (report.psnr_extreme_to_mid + report.psnr_mid_to_extreme);
  return report;
}

ConsistencyReport consistencyEval(const ViewRenderer& render, const geometry::CameraIntrinsics& intrinsics,
                                  const geometry::Pose& base, double yaw_deg, double pitch_deg) {
  const geometry::Pose mid = geometry::lookPose(base, yaw_deg / 2, pitch_deg / 2);
  const geometry::Pose extreme = geometry::lookPose(base, yaw_deg, pitch_deg);
  return consistencyFromViews(render(mid), mid, render(extreme), extreme, intrinsics);
}

}  // namespace scenesynth::metrics
