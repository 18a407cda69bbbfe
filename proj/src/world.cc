#include "scenesynth/world.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scenesynth/parallel.h"
#include "scenesynth/rng.h"

namespace scenesynth::world {

using geometry::CameraIntrinsics;
using geometry::Pose;

namespace {

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

constexpr double kDecalEdge = 0.06;

Color randomColor(Rng& rng, double lo, double hi) {
  return Color(static_cast<float>(uniformRange(rng, lo, hi)),
               static_cast<float>(uniformRange(rng, lo, hi)),
               static_cast<float>(uniformRange(rng, lo, hi)));
}

// In-plane coordinates of a wall normal to `axis`.
std::pair<double, double> wallUv(int axis, const Eigen::Vector3d& p) {
  return {p[(axis + 1) % 3], p[(axis + 2) % 3]};
}

}  // namespace

void RoomSpec::validate() const {
  SS_CHECK(extents.allFinite() && extents.minCoeff() > 0, "room: extents must be positive");
  for (const auto& t : textures) SS_CHECK(t.period > 0, "room: texture periods must be positive");
  for (const auto& d : decals) SS_CHECK(d.wall >= 0 && d.wall < kWalls, "room: bad decal wall");
  SS_CHECK(contains(camera_start), "room: camera start must be strictly inside the box");
}

bool RoomSpec::contains(const Eigen::Vector3d& point, double margin) const {
  for (int i = 0; i < 3; ++i) {
    if (!(std::abs(point[i]) < extents[i] / 2 - margin)) return false;
  }
  return true;
}

Color RoomSpec::colorAt(int wall, const Eigen::Vector3d& point) const {
  const int axis = wall / 2;
  const auto [u, v] = wallUv(axis, point);
  const WallTexture& tex = textures[wall];
  const double k = 2.0 * std::numbers::pi / tex.period;
  const double s = tex.pattern == Pattern::kChecker
                       ? std::sin(k * u + tex.phase) * std::sin(k * v + tex.phase)
                       : std::sin(k * u + tex.phase);
  const float t = static_cast<float>(0.5 + 0.5 * s);
  Color color = base_colors[wall] + (tex.secondary - base_colors[wall]) * t;
  for (const Decal& d : decals) {
    if (d.wall != wall) continue;
    const double wu = smoothstep(d.u0 - kDecalEdge, d.u0 + kDecalEdge, u) *
                      (1.0 - smoothstep(d.u1 - kDecalEdge, d.u1 + kDecalEdge, u));
    const double wv = smoothstep(d.v0 - kDecalEdge, d.v0 + kDecalEdge, v) *
                      (1.0 - smoothstep(d.v1 - kDecalEdge, d.v1 + kDecalEdge, v));
    const float w = static_cast<float>(wu * wv);
    color = color * (1.f - w) + d.color * w;
  }
  return color;
}

RoomSpec RoomSpec::procedural(uint64_t seed) {
  Rng rng(seed);
  RoomSpec room;
  room.seed = seed;
  for (int w = 0; w < kWalls; ++w) {
    room.base_colors[w] = randomColor(rng, 0.15, 0.85);
    WallTexture& t = room.textures[w];
    t.pattern = uniform01(rng) < 0.5 ? Pattern::kChecker : Pattern::kStripes;
    t.period = uniformRange(rng, 0.8, 1.6);
    t.phase = uniformRange(rng, 0.0, 2.0 * std::numbers::pi);
    const Color other = randomColor(rng, 0.1, 0.9);
    t.secondary = room.base_colors[w] + (other - room.base_colors[w]) * 0.6f;
  }
  const int decals = 3 + static_cast<int>(uniformIndex(rng, 4));
  for (int i = 0; i < decals; ++i) {
    Decal d;
    d.wall = static_cast<int>(uniformIndex(rng, kWalls));
    const int axis = d.wall / 2;
    const double eu = room.extents[(axis + 1) % 3] / 2, ev = room.extents[(axis + 2) % 3] / 2;
    const double su = uniformRange(rng, 0.4, 1.2), sv = uniformRange(rng, 0.4, 1.2);
    d.u0 = uniformRange(rng, -eu, eu - su);
    d.v0 = uniformRange(rng, -ev, ev - sv);
    d.u1 = d.u0 + su;
    d.v1 = d.v0 + sv;
    d.color = randomColor(rng, 0.05, 0.95);
    room.decals.push_back(d);
  }
  room.camera_start = Eigen::Vector3d(uniformRange(rng, -0.8, 0.8), 0.0, uniformRange(rng, -0.4, 0.4));
  return room;
}

std::pair<int, double> wallPlane(const RoomSpec& room, int wall) {
  SS_CHECK(wall >= 0 && wall < kWalls, "wallPlane: bad wall index");
  const int axis = wall / 2;
  return {axis, (wall % 2 == 0 ? -0.5 : 0.5) * room.extents[axis]};
}

RayHit castRay(const RoomSpec& room, const Eigen::Vector3d& origin, const Eigen::Vector3d& direction) {
  RayHit best{std::numeric_limits<double>::infinity(), -1};
  for (int axis = 0; axis < 3; ++axis) {
    if (direction[axis] == 0) continue;
    const int wall = 2 * axis + (direction[axis] > 0 ? 1 : 0);
    const double t = (wallPlane(room, wall).second - origin[axis]) / direction[axis];
    if (t > 0 && t < best.t) best = {t, wall};
  }
  SS_CHECK(best.wall >= 0, "castRay: ray does not hit the room");
  return best;
}

RgbdFrame raycastRender(const RoomSpec& room, const CameraIntrinsics& intrinsics, const Pose& pose,
                        const RaycastOptions& options) {
  intrinsics.validate();
  pose.validate();
  SS_CHECK(options.supersample >= 1, "raycastRender: supersample must be >= 1");
  SS_CHECK(room.contains(pose.translation), "raycastRender: camera outside the room");
  const int h = intrinsics.height, w = intrinsics.width, ss = options.supersample;
  RgbdFrame out{Image(h, w), geometry::DepthMap(h, w)};
  const Eigen::Vector3d& origin = pose.translation;
  parallelFor(0, h, [&](int v) {
    for (int u = 0; u < w; ++u) {
      const Eigen::Vector3d center((u - intrinsics.cx) / intrinsics.fx,
                                   (v - intrinsics.cy) / intrinsics.fy, 1.0);
      out.depth.values(v, u) = castRay(room, origin, pose.rotation * center).t;
      out.depth.valid(v, u) = 1;
      Eigen::Vector3d sum = Eigen::Vector3d::Zero();
      for (int i = 0; i < ss; ++i) {
        for (int j = 0; j < ss; ++j) {
          const double du = (j + 0.5) / ss - 0.5, dv = (i + 0.5) / ss - 0.5;
          const Eigen::Vector3d d = pose.rotation * Eigen::Vector3d((u + du - intrinsics.cx) / intrinsics.fx,
                                                                    (v + dv - intrinsics.cy) / intrinsics.fy, 1.0);
          const RayHit hit = castRay(room, origin, d);
          sum += room.colorAt(hit.wall, origin + hit.t * d).cast<double>();
        }
      }
      out.image(v, u) = (sum / (ss * ss)).cast<float>().cwiseMax(0.f).cwiseMin(1.f);
    }
  });
  return out;
}

void PairSpec::validate() const {
  SS_CHECK(0 <= min_rotation_deg && min_rotation_deg <= max_rotation_deg,
           "pair spec: need 0 <= min rotation <= max rotation");
  SS_CHECK(max_translation >= 0, "pair spec: max translation must be >= 0");
  SS_CHECK(pitch_cap_deg >= 0 && wall_margin >= 0, "pair spec: bad cap or margin");
}

std::pair<Pose, Pose> samplePair(const RoomSpec& room, const PairSpec& spec, uint64_t seed) {
  spec.validate();
  room.validate();
  Rng rng(seed);
  auto signedAngle = [&](double lo, double hi) {
    const double mag = uniformRange(rng, lo, hi);
    return uniform01(rng) < 0.5 ? -mag : mag;
  };
  const double half_x = room.extents.x() / 2 - spec.wall_margin;
  const double half_z = room.extents.z() / 2 - spec.wall_margin;
  SS_CHECK(half_x > 0 && half_z > 0, "samplePair: wall margin larger than the room");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Pose src;
    src.translation = Eigen::Vector3d(uniformRange(rng, -half_x, half_x), room.camera_start.y(),
                                      uniformRange(rng, -half_z, half_z));
    src.rotation = geometry::yawPitchRotation(uniformRange(rng, 0.0, 360.0), 0.0);

    const double yaw = spec.yaw ? signedAngle(spec.min_rotation_deg, spec.max_rotation_deg) : 0.0;
    const double pitch = spec.pitch ? signedAngle(std::min(spec.min_rotation_deg, spec.pitch_cap_deg),
                                                  std::min(spec.max_rotation_deg, spec.pitch_cap_deg))
                                    : 0.0;
    const double roll = spec.roll ? signedAngle(spec.min_rotation_deg, spec.max_rotation_deg) : 0.0;
    const double rr = roll * std::numbers::pi / 180.0;
    Eigen::Matrix3d rz;
    rz << std::cos(rr), -std::sin(rr), 0, std::sin(rr), std::cos(rr), 0, 0, 0, 1;
    const Eigen::Matrix3d rel = geometry::yawPitchRotation(yaw, pitch) * rz;
    const double angle = geometry::rotationAngleDeg(rel);
    if (angle < spec.min_rotation_deg - 1e-9 || angle > spec.max_rotation_deg + 1e-9) continue;

    Eigen::Vector3d dir;
    do {
      dir = Eigen::Vector3d(uniformRange(rng, -1, 1), uniformRange(rng, -1, 1), uniformRange(rng, -1, 1));
    } while (dir.squaredNorm() > 1.0 || dir.squaredNorm() < 1e-12);
    const double mag = uniformRange(rng, 0.0, spec.max_translation);

    Pose tgt;
    tgt.rotation = src.rotation * rel;
    tgt.translation = src.translation + mag * dir.normalized();
    if (!room.contains(src.translation, spec.wall_margin) ||
        !room.contains(tgt.translation, spec.wall_margin))
      continue;
    return {src, tgt};
  }
  throw Error("samplePair: rejection budget exhausted");
}

CameraIntrinsics defaultIntrinsics() { return {32.0, 32.0, 32.0, 32.0, 64, 64}; }

vq::TokenGrid CorpusExample::trainingGrid() const {
  vq::TokenGrid grid = label;
  for (size_t i = 0; i < grid.tokens.size(); ++i) {
    if (partial.known[i]) grid.tokens[i] = partial.tokens[i];
  }
  return grid;
}

std::vector<CorpusPair> planCorpus(const std::vector<RoomSpec>& rooms, int pairs_per_room,
                                   const std::vector<CurriculumStage>& curriculum,
                                   const CorpusOptions& options) {
  SS_CHECK(!curriculum.empty(), "planCorpus: empty curriculum");
  SS_CHECK(pairs_per_room >= 0, "planCorpus: pairs_per_room must be >= 0");
  const int stages = static_cast<int>(curriculum.size());
  std::vector<CorpusPair> pairs;
  for (size_t r = 0; r < rooms.size(); ++r) {
    for (int j = 0; j < pairs_per_room; ++j) {
      CorpusPair pair;
      pair.room = static_cast<int>(r);
      pair.stage = static_cast<int>(static_cast<long>(j) * stages / pairs_per_room);
      pair.seed = rooms[r].seed * 1000003ULL + static_cast<uint64_t>(j) * 7919ULL + 17ULL;
      PairSpec spec;
      spec.min_rotation_deg = 0.0;
      spec.max_rotation_deg = curriculum[pair.stage].max_rotation_deg;
      spec.max_translation = options.max_translation;
      spec.pitch_cap_deg = options.pitch_cap_deg;
      std::tie(pair.source, pair.target) = samplePair(rooms[r], spec, pair.seed);
      pairs.push_back(pair);
    }
  }
  return pairs;
}

bool buildExample(const RoomSpec& room, const CorpusPair& pair, const vq::Codebook& codebook,
                  const CorpusOptions& options, CorpusExample& out) {
  const RgbdFrame src = raycastRender(room, options.intrinsics, pair.source, options.raycast);
  const RgbdFrame tgt = raycastRender(room, options.intrinsics, pair.target, options.raycast);
  return buildExampleFromFrames(src, tgt, pair, codebook, options, out);
}

bool buildExampleFromFrames(const RgbdFrame& source, const RgbdFrame& target, const CorpusPair& pair,
                            const vq::Codebook& codebook, const CorpusOptions& options, CorpusExample& out) {
  const geometry::PointCloud cloud =
      geometry::unproject(source.image, source.depth, options.intrinsics, pair.source);
  const geometry::RenderResult reproj =
      geometry::renderTrimmed(cloud, options.intrinsics, pair.target, options.splat, options.erode_px);
  out.room = pair.room;
  out.stage = pair.stage;
  out.rotation_deg = geometry::rotationAngleDeg(geometry::relativeRotation(pair.source, pair.target));
  out.partial = vq::encode(reproj.image, reproj.visible, codebook, options.known_fraction);
  out.label = vq::encode(target.image, Mask(target.image.height(), target.image.width(), 1), codebook,
                         options.known_fraction);
  out.order = ordering::generateOrder(out.partial.known);
  const int b = out.order.backgroundCount();
  out.unknown_fraction = static_cast<double>(b) / static_cast<double>(out.order.rank.size());
  return b > 0;
}

Corpus buildCorpus(const std::vector<RoomSpec>& rooms, int pairs_per_room,
                   const std::vector<CurriculumStage>& curriculum, const vq::Codebook& codebook,
                   const CorpusOptions& options) {
  codebook.validate();
  const std::vector<CorpusPair> pairs = planCorpus(rooms, pairs_per_room, curriculum, options);
  std::vector<CorpusExample> built(pairs.size());
  std::vector<uint8_t> keep(pairs.size(), 0);
  parallelFor(0, static_cast<int>(pairs.size()), [&](int i) {
    keep[i] = buildExample(rooms[pairs[i].room], pairs[i], codebook, options, built[i]);
  });
  Corpus corpus;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (keep[i]) {
      corpus.examples.push_back(std::move(built[i]));
    } else {
      ++corpus.skipped;
    }
  }
  return corpus;
}

}  // namespace scenesynth::world
