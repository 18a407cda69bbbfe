#include <gtest/gtest.h>

#include <cmath>

#include "pipeline_fixture.h"
#include "scenesynth/pipeline.h"
#include "test_util.h"

using namespace scenesynth;
using namespace scenesynth::pipeline;
using geometry::Pose;

namespace {

double meanAbsDiff(const Image& a, const Image& b, const Mask& where) {
  double s = 0;
  size_t n = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!where[i]) continue;
    s += (a[i] - b[i]).cwiseAbs().cast<double>().sum() / 3;
    ++n;
  }
  return n ? s / n : 0.0;
}

geometry::RenderResult reprojectionOf(const Image& image, const Mask& visible) {
  geometry::RenderResult r;
  r.image = image;
  r.visible = visible;
  return r;
}

}  // namespace

TEST(InitScene, TagsInputsAndValidates) {
  const auto k = world::defaultIntrinsics();
  const SceneInput a = training::fixtureInput(world::RoomSpec::procedural(1), k);
  SceneInput b = training::fixtureInput(world::RoomSpec::procedural(2), k);
  b.pose.rotation = geometry::yawPitchRotation(20, 0);
  const SceneState s = initScene({a, b}, k, PipelineConfig{}, 3);
  ASSERT_EQ(s.clouds.size(), 2u);
  EXPECT_EQ(s.inputCount(), 2u);
  EXPECT_EQ(s.base_pose.translation, a.pose.translation);
  for (uint16_t t : s.clouds[1].cloud.source) ASSERT_EQ(t, 1);
  EXPECT_EQ(s.clouds[0].cloud.size(), countTrue(a.depth.valid));
  EXPECT_EQ(s.pointCount(), s.mergedCloud().size());
  EXPECT_THROW(initScene({}, k, PipelineConfig{}), Error);
  SceneInput small = a;
  small.image = Image(8, 8);
  EXPECT_THROW(initScene({small}, k, PipelineConfig{}), Error);
}

TEST(Strategy, NamesRoundTrip) {
  for (Strategy s : {Strategy::kSupportFirst, Strategy::kSequential, Strategy::kNoAccumulation})
    EXPECT_EQ(parseStrategy(strategyName(s)), s);
  EXPECT_THROW(parseStrategy("greedy"), Error);
}

TEST(Outpaint, BasePoseNeedsNothingAndReproducesTheInput) {
  SceneState s = test::smallScene(21, Strategy::kSupportFirst);
  const SceneInput in = training::fixtureInput(world::RoomSpec::procedural(21), s.intrinsics);
  const OutpaintReport r = outpaintSupport(s, s.base_pose);
  EXPECT_EQ(r.unknown_tokens, 0);
  EXPECT_EQ(r.new_points, 0u);
  EXPECT_EQ(r.selected_sample, -1);
  EXPECT_EQ(s.clouds.size(), 1u);
  EXPECT_LE(test::maxAbsDiff(s.support_views[0].image, in.image), 1.0 / 255 + 1e-6);
}

TEST(Outpaint, FortyDegreesOutpaintsAndCovers) {
  SceneState s = test::smallScene(22, Strategy::kSupportFirst);
  const Pose pose = geometry::lookPose(s.base_pose, 40, 0);
  const OutpaintReport r = outpaintSupport(s, pose);
  EXPECT_GT(r.unknown_tokens / 256.0, 0.2);
  EXPECT_GT(r.new_points, 0u);
  EXPECT_GE(r.selected_sample, 0);
  EXPECT_LT(r.selected_sample, 3);
  EXPECT_EQ(s.support_views.back().cloud_index, 1);
  EXPECT_GE(renderView(s, pose).coverage_fraction, 0.999);
  // A second pass over the same view has nothing left to generate.
  const size_t before = s.pointCount();
  const OutpaintReport again = outpaintSupport(s, pose);
  EXPECT_EQ(again.unknown_tokens, 0);
  EXPECT_EQ(s.pointCount(), before);
}

TEST(Outpaint, RequiresModels) {
  SceneState s = test::smallScene(22, Strategy::kSupportFirst);
  s.model.reset();
  EXPECT_THROW(outpaintSupport(s, geometry::lookPose(s.base_pose, 40, 0)), Error);
  s = test::smallScene(22, Strategy::kSupportFirst);
  s.model = std::make_shared<const ar::ArModel>(ar::ArConfig{.num_tokens = 5}, 1);
  EXPECT_THROW(outpaintSupport(s, geometry::lookPose(s.base_pose, 40, 0)), Error);
}

TEST(RefineComposite, VisiblePixelsAreKeptAndFeatherBlends) {
  // One row: visible on the left three pixels, outpainted elsewhere.
  Image reproj(1, 8, Color::Zero());
  Mask vis(1, 8, 0);
  for (int c = 0; c < 3; ++c) {
    reproj(0, c) = Color::Constant(0.9f);
    vis(0, c) = 1;
  }
  const Image outp(1, 8, Color::Constant(0.3f));
  const Image out = refineComposite(outp, reprojectionOf(reproj, vis), 2, 0);
  for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(out(0, c)[0], 0.9f);
  // Distance 1 and 2 from the seam: weights 1/3 and 2/3 toward the outpainting.
  EXPECT_NEAR(out(0, 3)[0], 0.9 * 2 / 3 + 0.3 / 3, 1e-6);
  EXPECT_NEAR(out(0, 4)[0], 0.9 / 3 + 0.3 * 2 / 3, 1e-6);
  for (int c = 5; c < 8; ++c) EXPECT_FLOAT_EQ(out(0, c)[0], 0.3f);
  const Image sharp = refineComposite(outp, reprojectionOf(reproj, vis), 0, 0);
  EXPECT_FLOAT_EQ(sharp(0, 3)[0], 0.3f);
  EXPECT_THROW(refineComposite(Image(2, 2), reprojectionOf(reproj, vis), 2, 0), Error);
}

TEST(RefineComposite, WithoutOutpaintingFillsFromTheFrontier) {
  Image reproj(3, 3, Color::Zero());
  Mask vis(3, 3, 0);
  reproj(1, 1) = Color(0.2f, 0.4f, 0.6f);
  vis(1, 1) = 1;
  const Image out = refineComposite(std::nullopt, reprojectionOf(reproj, vis), 2, 4);
  for (size_t i = 0; i < out.size(); ++i) EXPECT_TRUE(out[i].isApprox(Color(0.2f, 0.4f, 0.6f)));
  // Nothing visible at all: black.
  const Image none = refineComposite(std::nullopt, reprojectionOf(reproj, Mask(3, 3, 0)), 2, 4);
  for (size_t i = 0; i < none.size(); ++i) EXPECT_EQ(none[i], Color::Zero());
}

TEST(DepthFill, FillsOnlyGeneratedPixelsWithinTheObservedRange) {
  geometry::DepthMap d(1, 6);
  d.values(0, 0) = 2.0;
  d.values(0, 1) = 3.0;
  d.valid(0, 0) = d.valid(0, 1) = 1;
  Mask gen(1, 6, 0);
  gen(0, 2) = gen(0, 3) = gen(0, 5) = 1;
  const geometry::DepthMap out = depthFill(d, gen, 1);
  EXPECT_EQ(out.values(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(out.values(0, 2), 3.0);  // one frontier step from its only valid neighbor
  EXPECT_TRUE(out.valid(0, 3));
  EXPECT_GE(out.values(0, 3), 2.0);
  EXPECT_LE(out.values(0, 3), 3.0);
  EXPECT_FALSE(out.valid(0, 4));
  EXPECT_TRUE(out.valid(0, 5));
  EXPECT_THROW(depthFill(geometry::DepthMap(1, 6), gen, 1), Error);
}

TEST(RenderView, DeterministicAndHoleChecked) {
  SceneState s = test::smallScene(23, Strategy::kSupportFirst);
  const Pose far = geometry::lookPose(s.base_pose, 40, 20);
  EXPECT_THROW(renderView(s, far), CoverageError);
  try {
    renderView(s, far);
  } catch (const CoverageError& e) {
    EXPECT_EQ(e.nearestDirection(), "up-right");
    EXPECT_GT(e.holeFraction(), 0.02);
  }
  outpaintSupport(s, far);
  const ViewRender a = renderView(s, far), b = renderView(s, far);
  EXPECT_EQ(test::maxAbsDiff(a.image, b.image), 0.0);
  EXPECT_EQ(a.source, b.source);
  EXPECT_FALSE(a.outpainted);
}

TEST(RenderView, NoAccumulationResamplesPerSeed) {
  const Pose pose = geometry::lookPose(Pose{Eigen::Matrix3d::Identity(), world::RoomSpec::procedural(24).camera_start}, 40, 0);
  SceneState s0 = test::smallScene(24, Strategy::kNoAccumulation, test::smallConfig(), 0);
  SceneState s1 = test::smallScene(24, Strategy::kNoAccumulation, test::smallConfig(), 1);
  const ViewRender a = renderView(s0, pose), b = renderView(s1, pose);
  EXPECT_TRUE(a.outpainted);
  EXPECT_EQ(test::maxAbsDiff(a.image, renderView(s0, pose).image), 0.0);
  Mask gen(a.source.height(), a.source.width(), 0);
  for (size_t i = 0; i < gen.size(); ++i) gen[i] = a.source[i] == 0xFFFE;
  ASSERT_GT(countTrue(gen), 0u);
  EXPECT_GT(meanAbsDiff(a.image, b.image, gen), 0.1);
  // Support outpainting keeps nothing.
  outpaintSupport(s0, pose);
  EXPECT_EQ(s0.clouds.size(), 1u);
  EXPECT_EQ(s0.support_views.back().cloud_index, -1);
  EXPECT_GT(s0.support_views.back().new_points, 0u);
}

TEST(Panorama, CoversTheExtentsWithMonotoneGrowth) {
  for (Strategy strategy : {Strategy::kSupportFirst, Strategy::kSequential}) {
    SceneState s = test::smallScene(25, strategy);
    std::vector<std::string> names;
    size_t prev = s.pointCount();
    synthesizePanorama(s, 40, 20, [&](int index, const std::string& dir, const OutpaintReport&) {
      EXPECT_EQ(index, static_cast<int>(names.size()));
      names.push_back(dir);
      EXPECT_GE(s.pointCount(), prev);
      prev = s.pointCount();
    });
    EXPECT_EQ(names, (std::vector<std::string>{"up", "left", "down", "right", "up-left", "up-right", "down-left",
                                               "down-right"}));
    EXPECT_EQ(s.support_views.size(), strategy == Strategy::kSequential ? 16u : 8u);
    for (double yaw = -40; yaw <= 40; yaw += 10)
      for (double pitch = -20; pitch <= 20; pitch += 10) {
        const ViewRender v = renderView(s, geometry::lookPose(s.base_pose, yaw, pitch));
        EXPECT_GE(v.coverage_fraction, 1 - s.config.max_hole_fraction);
        const size_t sources = s.inputCount() + s.support_views.size();
        for (uint16_t tag : v.source.values()) ASSERT_LT(tag, sources);
      }
  }
}

TEST(Panorama, ZeroExtentAddsNothing) {
  SceneState s = test::smallScene(26, Strategy::kSupportFirst);
  synthesizePanorama(s, 0, 0);
  EXPECT_EQ(s.support_views.size(), 8u);
  EXPECT_EQ(s.clouds.size(), 1u);
  for (const auto& v : s.support_views) EXPECT_EQ(v.unknown_tokens, 0);
  EXPECT_THROW(synthesizePanorama(s, -1, 0), Error);
}

TEST(Panorama, SameSeedSameScene) {
  SceneState a = test::smallScene(27, Strategy::kSupportFirst), b = test::smallScene(27, Strategy::kSupportFirst);
  synthesizePanorama(a, 40, 20);
  synthesizePanorama(b, 40, 20);
  EXPECT_EQ(a.mergedCloud(), b.mergedCloud());
  const metrics::ConsistencyReport r = consistencyEval(a, 35, 17.5);
  EXPECT_EQ(r.mean, consistencyEval(b, 35, 17.5).mean);
}

TEST(Curriculum, ScheduleExamples) {
  auto rots = [](const std::vector<world::CurriculumStage>& st) {
    std::vector<double> r;
    for (const auto& s : st) r.push_back(s.max_rotation_deg);
    return r;
  };
  EXPECT_EQ(rots(curriculumSchedule(15, 60, 50)), (std::vector<double>{15, 30, 45, 60}));
  EXPECT_EQ(rots(curriculumSchedule(20, 50, 1)), (std::vector<double>{20, 40, 50}));
  EXPECT_EQ(rots(curriculumSchedule(60, 60, 1)), (std::vector<double>{60}));
  EXPECT_EQ(curriculumSchedule(20, 120, 7).size(), 6u);
  for (const auto& s : curriculumSchedule(20, 120, 7)) EXPECT_EQ(s.iterations, 7);
  EXPECT_THROW(curriculumSchedule(0, 60, 1), Error);
  EXPECT_THROW(curriculumSchedule(70, 60, 1), Error);
  EXPECT_THROW(curriculumSchedule(15, 60, -1), Error);
}

TEST(NearestDirection, MapsPosesToSupports) {
  const SceneState s = test::smallScene(28, Strategy::kSupportFirst);
  EXPECT_EQ(nearestDirection(s, geometry::lookPose(s.base_pose, -38, 0)), "left");
  EXPECT_EQ(nearestDirection(s, geometry::lookPose(s.base_pose, 0, -19)), "down");
  EXPECT_EQ(nearestDirection(s, geometry::lookPose(s.base_pose, 35, 18)), "up-right");
}
