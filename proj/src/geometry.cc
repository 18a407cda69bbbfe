#include "scenesynth/geometry.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "scenesynth/parallel.h"

namespace scenesynth::geometry {

void CameraIntrinsics::validate() const {
  SS_CHECK(fx > 0 && fy > 0, "intrinsics: focal lengths must be positive");
  SS_CHECK(width > 0 && height > 0, "intrinsics: image size must be positive");
  SS_CHECK(cx >= 0 && cx < width && cy >= 0 && cy < height,
           "intrinsics: principal point outside the image");
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

CameraIntrinsics CameraIntrinsics::padded(int margin) const {
  CameraIntrinsics out = *this;
  out.cx += margin;
  out.cy += margin;
  out.width += 2 * margin;
  out.height += 2 * margin;
  return out;
}

bool isRotation(const Eigen::Matrix3d& rotation, double tolerance) {
  if (!rotation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tolerance && std::abs(rotation.determinant() - 1.0) <= tolerance;
}

void Pose::validate() const {
  SS_CHECK(isRotation(rotation, 1e-9), "pose: rotation is not orthonormal with det 1");
  SS_CHECK(translation.allFinite(), "pose: translation is not finite");
}

Pose composePose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose invertPose(const Pose& p) {
  const Eigen::Matrix3d rt = p.rotation.transpose();
  return {rt, -(rt * p.translation)};
}

Eigen::Matrix3d yawPitchRotation(double yaw_deg, double pitch_deg) {
  const double yaw = yaw_deg * std::numbers::pi / 180.0;
  const double pitch = pitch_deg * std::numbers::pi / 180.0;
  Eigen::Matrix3d ry, rx;
  ry << std::cos(yaw), 0, std::sin(yaw), 0, 1, 0, -std::sin(yaw), 0, std::cos(yaw);
  rx << 1, 0, 0, 0, std::cos(pitch), -std::sin(pitch), 0, std::sin(pitch), std::cos(pitch);
  return ry * rx;
}

Pose lookPose(const Pose& base, double yaw_deg, double pitch_deg, double step) {
  Pose turn;
  turn.rotation = yawPitchRotation(yaw_deg, pitch_deg);
  Pose out = composePose(base, turn);
  out.translation += step * out.rotation.col(2);
  return out;
}

double rotationAngleDeg(const Eigen::Matrix3d& rotation) {
  const double c = std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

void DepthMap::validate() const {
  SS_CHECK(values.sameShape(valid), "depth map: values/valid shape mismatch");
  for (size_t i = 0; i < values.size(); ++i) {
    if (valid[i]) SS_CHECK(std::isfinite(values[i]) && values[i] > 0, "depth map: invalid depth");
  }
}

void PointCloud::append(const PointCloud& other) {
  positions.insert(positions.end(), other.positions.begin(), other.positions.end());
  colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  source.insert(source.end(), other.source.begin(), other.source.end());
}

void PointCloud::validate() const {
  SS_CHECK(positions.size() == colors.size() && positions.size() == source.size(),
           "point cloud: array lengths differ");
  for (const auto& p : positions) SS_CHECK(p.allFinite(), "point cloud: non-finite position");
}

PointCloud unproject(const Image& image, const DepthMap& depth, const CameraIntrinsics& intrinsics,
                     const Pose& pose, uint16_t source_id) {
  intrinsics.validate();
  SS_CHECK(image.height() == intrinsics.height && image.width() == intrinsics.width,
           "unproject: image size does not match intrinsics");
  SS_CHECK(depth.values.sameShape(image) && depth.valid.sameShape(image),
           "unproject: depth size does not match image");
  PointCloud cloud;
  for (int v = 0; v < image.height(); ++v) {
    for (int u = 0; u < image.width(); ++u) {
      if (!depth.valid(v, u)) continue;
      const double d = depth.values(v, u);
      SS_CHECK(std::isfinite(d) && d > 0, "unproject: nonpositive depth at a valid pixel");
      const Eigen::Vector3d cam((u - intrinsics.cx) / intrinsics.fx * d,
                                (v - intrinsics.cy) / intrinsics.fy * d, d);
      cloud.positions.push_back((pose.rotation * cam + pose.translation).cast<float>());
      cloud.colors.push_back(toRgb8(image(v, u)));
      cloud.source.push_back(source_id);
    }
  }
  return cloud;
}

namespace {

// Image coordinates are kept relative to the principal point so that an integer
// shift of (cx, cy) shifts every pixel result exactly.
struct Projected {
  double x, y;
  float z;
  uint32_t index;
};

long roundShifted(double rel, double center) {
  const double whole = std::floor(center);
  return std::lround(rel + (center - whole)) + static_cast<long>(whole);
}

struct Candidate {
  bool front;
  float dist2;
  float z;
  uint32_t index;
};

}  // namespace

RenderResult splatRender(const PointCloud& cloud, const CameraIntrinsics& intrinsics,
                         const Pose& pose, const SplatOptions& options) {
  intrinsics.validate();
  SS_CHECK(options.radius_px >= 1, "splatRender: radius_px must be >= 1");
  SS_CHECK(options.points_per_pixel >= 1, "splatRender: points_per_pixel must be >= 1");
  cloud.validate();

  const int h = intrinsics.height, w = intrinsics.width;
  const int r = options.radius_px;
  const float radius2 = static_cast<float>(r * r);

  RenderResult out;
  out.image = Image(h, w, Color::Zero());
  out.coverage = Grid<float>(h, w, 0.f);
  out.visible = Mask(h, w, 0);
  out.depth = Grid<float>(h, w, 0.f);
  out.source = Grid<uint16_t>(h, w, kNoSource);
  if (cloud.empty()) return out;

  // Read-only prepass: project and bin every point by its nearest pixel on a
  // canvas padded by the splat radius.
  const Eigen::Matrix3d rt = pose.rotation.transpose();
  const int pad = r + 1;
  const int bw = w + 2 * pad, bh = h + 2 * pad;
  std::vector<Projected> projected;
  projected.reserve(cloud.size());
  std::vector<int> bin_of;
  bin_of.reserve(cloud.size());
  std::vector<uint32_t> bin_count(static_cast<size_t>(bw) * bh + 1, 0);
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d cam = rt * (cloud.positions[i].cast<double>() - pose.translation);
    if (!(cam.z() > 1e-9)) continue;
    const double x = intrinsics.fx * cam.x() / cam.z();
    const double y = intrinsics.fy * cam.y() / cam.z();
    if (std::abs(x) > 1e7 || std::abs(y) > 1e7) continue;
    const long bu = roundShifted(x, intrinsics.cx) + pad, bv = roundShifted(y, intrinsics.cy) + pad;
    if (bu < 0 || bv < 0 || bu >= bw || bv >= bh) continue;
    projected.push_back({x, y, static_cast<float>(cam.z()), static_cast<uint32_t>(i)});
    bin_of.push_back(static_cast<int>(bv * bw + bu));
    ++bin_count[bin_of.back() + 1];
  }
  for (size_t b = 1; b < bin_count.size(); ++b) bin_count[b] += bin_count[b - 1];
  std::vector<uint32_t> binned(projected.size());
  {
    std::vector<uint32_t> cursor(bin_count.begin(), bin_count.end() - 1);
    for (size_t k = 0; k < projected.size(); ++k) binned[cursor[bin_of[k]]++] = static_cast<uint32_t>(k);
  }
  auto binRange = [&](int bv, int bu) {
    const size_t b = static_cast<size_t>(bv) * bw + bu;
    return std::pair<uint32_t, uint32_t>(bin_count[b], bin_count[b + 1]);
  };

  // Reference depth: nearest point landing in the pixel itself, else in its 3x3
  // neighborhood.
  auto binMinDepth = [&](int bv, int bu) {
    float best = std::numeric_limits<float>::infinity();
    if (bv < 0 || bu < 0 || bv >= bh || bu >= bw) return best;
    const auto [lo, hi] = binRange(bv, bu);
    for (uint32_t k = lo; k < hi; ++k) best = std::min(best, projected[binned[k]].z);
    return best;
  };

  const int reach = r + 1;
  parallelFor(0, h, [&](int row) {
    std::vector<Candidate> candidates;
    const double rel_row = row - intrinsics.cy;
    for (int col = 0; col < w; ++col) {
      const double rel_col = col - intrinsics.cx;
      const int cbv = row + pad, cbu = col + pad;
      float zref = binMinDepth(cbv, cbu);
      if (!std::isfinite(zref)) {
        for (int dv = -1; dv <= 1; ++dv)
          for (int du = -1; du <= 1; ++du) zref = std::min(zref, binMinDepth(cbv + dv, cbu + du));
      }
      const float front_limit = zref * static_cast<float>(1.0 + options.depth_tolerance);

      candidates.clear();
      for (int bv = std::max(0, cbv - reach); bv <= std::min(bh - 1, cbv + reach); ++bv) {
        for (int bu = std::max(0, cbu - reach); bu <= std::min(bw - 1, cbu + reach); ++bu) {
          const auto [lo, hi] = binRange(bv, bu);
          for (uint32_t k = lo; k < hi; ++k) {
            const Projected& p = projected[binned[k]];
            const double du = p.x - rel_col, dv = p.y - rel_row;
            const float d2 = static_cast<float>(du * du + dv * dv);
            if (d2 >= radius2) continue;
            candidates.push_back({!(p.z > front_limit), d2, p.z, p.index});
          }
        }
      }
      if (candidates.empty()) continue;

      // Front surface nearest-first in pixel distance; occluded candidates by depth.
      // Color breaks exact ties so the result never depends on insertion order.
      auto colorKey = [&](uint32_t i) {
        const Rgb8 c = cloud.colors[i];
        return (static_cast<uint32_t>(c.r) << 16) | (static_cast<uint32_t>(c.g) << 8) | c.b;
      };
      auto before = [&](const Candidate& a, const Candidate& b) {
        if (a.front != b.front) return a.front;
        if (a.front) {
          if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
          if (a.z != b.z) return a.z < b.z;
        } else {
          if (a.z != b.z) return a.z < b.z;
          if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
        }
        const uint32_t ca = colorKey(a.index), cb = colorKey(b.index);
        if (ca != cb) return ca < cb;
        return cloud.source[a.index] < cloud.source[b.index];
      };
      const size_t keep = std::min<size_t>(candidates.size(), options.points_per_pixel);
      std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(), before);

      float transmittance = 1.f;
      Color color = Color::Zero();
      float depth = 0.f;
      for (size_t k = 0; k < keep; ++k) {
        const Candidate& c = candidates[k];
        const float alpha = std::clamp(1.f - c.dist2 / radius2, 0.f, 1.f);
        const float weight = transmittance * alpha;
        color += weight * fromRgb8(cloud.colors[c.index]);
        depth += weight * c.z;
        transmittance *= 1.f - alpha;
        if (1.f - transmittance >= 0.999f) break;
      }
      const float coverage = 1.f - transmittance;
      out.coverage(row, col) = coverage;
      if (coverage > 0.f) {
        out.image(row, col) = color / coverage;
        out.depth(row, col) = depth / coverage;
        out.source(row, col) = cloud.source[candidates[0].index];
      }
      out.visible(row, col) = coverage >= options.coverage_threshold;
    }
  });
  return out;
}

RenderResult trimBorder(const RenderResult& result, double coverage_threshold, int erode_px) {
  SS_CHECK(coverage_threshold > 0 && coverage_threshold <= 1,
           "trimBorder: coverage_threshold must be in (0, 1]");
  SS_CHECK(erode_px >= 0, "trimBorder: erode_px must be >= 0");
  RenderResult out = result;
  Mask above(result.height(), result.width(), 0);
  for (size_t i = 0; i < above.size(); ++i) above[i] = result.coverage[i] >= coverage_threshold;
  out.visible = erode(above, erode_px);
  for (size_t i = 0; i < out.visible.size(); ++i) {
    if (!out.visible[i]) {
      out.image[i] = Color::Zero();
      out.depth[i] = 0.f;
    }
  }
  return out;
}

RenderResult cropResult(const RenderResult& result, int margin) {
  const int h = result.height() - 2 * margin, w = result.width() - 2 * margin;
  SS_CHECK(margin >= 0 && h > 0 && w > 0, "cropResult: margin too large");
  RenderResult out;
  out.image = Image(h, w);
  out.coverage = Grid<float>(h, w);
  out.visible = Mask(h, w);
  out.depth = Grid<float>(h, w);
  out.source = Grid<uint16_t>(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      out.image(r, c) = result.image(r + margin, c + margin);
      out.coverage(r, c) = result.coverage(r + margin, c + margin);
      out.visible(r, c) = result.visible(r + margin, c + margin);
      out.depth(r, c) = result.depth(r + margin, c + margin);
      out.source(r, c) = result.source(r + margin, c + margin);
    }
  }
  return out;
}

RenderResult renderTrimmed(const PointCloud& cloud, const CameraIntrinsics& intrinsics,
                           const Pose& pose, const SplatOptions& options, int erode_px) {
  SS_CHECK(erode_px >= 0, "renderTrimmed: erode_px must be >= 0");
  const RenderResult padded = splatRender(cloud, intrinsics.padded(erode_px), pose, options);
  return cropResult(trimBorder(padded, options.coverage_threshold, erode_px), erode_px);
}

Eigen::Matrix3d rotationHomography(const CameraIntrinsics& intrinsics,
                                   const Eigen::Matrix3d& rotation_2_from_1) {
  SS_CHECK(isRotation(rotation_2_from_1, 1e-6), "rotationHomography: rotation is not orthonormal");
  const Eigen::Matrix3d k = intrinsics.matrix();
  Eigen::Matrix3d hom = k * rotation_2_from_1 * k.inverse();
  SS_CHECK(std::abs(hom(2, 2)) > 1e-12, "rotationHomography: cannot normalize (H[2][2] = 0)");
  return hom / hom(2, 2);
}

Eigen::Matrix3d relativeRotation(const Pose& from, const Pose& to) {
  return to.rotation.transpose() * from.rotation;
}

}  // namespace scenesynth::geometry
