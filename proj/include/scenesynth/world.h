#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "scenesynth/codebook.h"
#include "scenesynth/geometry.h"
#include "scenesynth/ordering.h"

namespace scenesynth::world {

// Walls, in order: x-, x+, y- (ceiling), y+ (floor), z-, z+.
inline constexpr int kWalls = 6;

enum class Pattern { kChecker, kStripes };

struct WallTexture {
  Pattern pattern = Pattern::kChecker;
  double period = 1.0;  // meters
  double phase = 0.0;   // radians
  Color secondary = Color(1, 1, 1);
};

// Axis-aligned rectangle on a wall in the wall's (u, v) coordinates, meters.
struct Decal {
  int wall = 0;
  double u0 = 0, v0 = 0, u1 = 0, v1 = 0;
  Color color = Color::Zero();
};

// Axis-aligned box centered on the origin (y points down).
struct RoomSpec {
  Eigen::Vector3d extents = Eigen::Vector3d(6.0, 3.0, 4.0);
  std::array<Color, kWalls> base_colors;
  std::array<WallTexture, kWalls> textures;
  std::vector<Decal> decals;
  Eigen::Vector3d camera_start = Eigen::Vector3d::Zero();
  uint64_t seed = 0;

  void validate() const;
  bool contains(const Eigen::Vector3d& point, double margin = 0.0) const;
  // Texture color at a point on wall `wall`.
  Color colorAt(int wall, const Eigen::Vector3d& point) const;

  static RoomSpec procedural(uint64_t seed);
};

// Wall plane coordinates: the axis the wall is normal to and its offset.
std::pair<int, double> wallPlane(const RoomSpec& room, int wall);

struct RayHit {
  double t = 0;  // ray parameter; equals camera depth for a camera ray with z = 1
  int wall = 0;
};

// Nearest exit of a ray starting strictly inside the room.
RayHit castRay(const RoomSpec& room, const Eigen::Vector3d& origin, const Eigen::Vector3d& direction);

struct RaycastOptions {
  int supersample = 3;  // per-axis subpixel rays for color; depth uses the center ray
};

struct RgbdFrame {
  Image image;
  geometry::DepthMap depth;
};

RgbdFrame raycastRender(const RoomSpec& room, const geometry::CameraIntrinsics& intrinsics,
                        const geometry::Pose& pose, const RaycastOptions& options = {});

struct PairSpec {
  double min_rotation_deg = 20.0;
  double max_rotation_deg = 60.0;
  double max_translation = 1.0;
  bool yaw = true, pitch = true, roll = false;
  double pitch_cap_deg = 30.0;
  double wall_margin = 0.3;  // both cameras stay this far from every wall

  void validate() const;
};

std::pair<geometry::Pose, geometry::Pose> samplePair(const RoomSpec& room, const PairSpec& spec,
                                                     uint64_t seed);

// Default 64x64 camera with a 90 degree horizontal field of view.
geometry::CameraIntrinsics defaultIntrinsics();

struct CurriculumStage {
  double max_rotation_deg = 0;
  int iterations = 0;
};

struct CorpusOptions {
  geometry::CameraIntrinsics intrinsics = defaultIntrinsics();
  geometry::SplatOptions splat;
  int erode_px = 2;
  double known_fraction = 0.5;
  double max_translation = 0.25;
  double pitch_cap_deg = 30.0;
  RaycastOptions raycast;
};

struct CorpusPair {
  int room = 0;
  int stage = 0;
  uint64_t seed = 0;
  geometry::Pose source, target;
};

struct CorpusExample {
  int room = 0;
  int stage = 0;
  vq::TokenGrid partial;  // reprojection tokens; unknown where not seen
  vq::TokenGrid label;    // oracle target tokens, fully known
  ordering::GenerationOrder order;
  double unknown_fraction = 0;
  double rotation_deg = 0;  // relative rotation between source and target

  // Teacher-forcing grid: the partial's tokens where known, the label elsewhere.
  vq::TokenGrid trainingGrid() const;
};

struct Corpus {
  std::vector<CorpusExample> examples;
  int skipped = 0;
};

// Pairs for `pairs_per_room` per room, split into contiguous blocks across the
// curriculum stages; stage s draws rotations in [0, max_rotation_s].
std::vector<CorpusPair> planCorpus(const std::vector<RoomSpec>& rooms, int pairs_per_room,
                                   const std::vector<CurriculumStage>& curriculum,
                                   const CorpusOptions& options = {});

// Renders, reprojects and encodes one pair. Returns false (pair skipped) when
// the reprojection leaves nothing to outpaint.
bool buildExample(const RoomSpec& room, const CorpusPair& pair, const vq::Codebook& codebook,
                  const CorpusOptions& options, CorpusExample& out);

// Same, from already rendered (or loaded) source and target frames.
bool buildExampleFromFrames(const RgbdFrame& source, const RgbdFrame& target, const CorpusPair& pair,
                            const vq::Codebook& codebook, const CorpusOptions& options, CorpusExample& out);

Corpus buildCorpus(const std::vector<RoomSpec>& rooms, int pairs_per_room,
                   const std::vector<CurriculumStage>& curriculum, const vq::Codebook& codebook,
                   const CorpusOptions& options = {});

}  // namespace scenesynth::world
