#include "scenesynth/scene_io.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "scenesynth/io.h"

namespace scenesynth::scene_io {

namespace fs = std::filesystem;
using nlohmann::json;

json poseToJson(const geometry::Pose& pose) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(pose.rotation(r, c));
  return {{"rotation", rot},
          {"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

geometry::Pose poseFromJson(const json& j) {
  geometry::Pose pose;
  const auto& rot = j.at("rotation");
  SS_CHECK(rot.is_array() && rot.size() == 9, "pose: rotation must have 9 entries");
  for (int i = 0; i < 9; ++i) pose.rotation(i / 3, i % 3) = rot.at(i).get<double>();
  const auto& t = j.at("translation");
  SS_CHECK(t.is_array() && t.size() == 3, "pose: translation must have 3 entries");
  for (int i = 0; i < 3; ++i) pose.translation[i] = t.at(i).get<double>();
  pose.validate();
  return pose;
}

json intrinsicsToJson(const geometry::CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

geometry::CameraIntrinsics intrinsicsFromJson(const json& j) {
  geometry::CameraIntrinsics k{j.at("fx").get<double>(),  j.at("fy").get<double>(),
                               j.at("cx").get<double>(),  j.at("cy").get<double>(),
                               j.at("width").get<int>(), j.at("height").get<int>()};
  k.validate();
  return k;
}

json configToJson(const pipeline::PipelineConfig& c) {
  return {{"radius_px", c.splat.radius_px},
          {"points_per_pixel", c.splat.points_per_pixel},
          {"depth_tolerance", c.splat.depth_tolerance},
          {"coverage_threshold", c.splat.coverage_threshold},
          {"erode_px", c.erode_px},
          {"known_fraction", c.known_fraction},
          {"samples", c.samples},
          {"temperature", c.temperature},
          {"feather_px", c.feather_px},
          {"fill_iters", c.fill_iters},
          {"max_hole_fraction", c.max_hole_fraction},
          {"yaw_extent", c.yaw_extent},
          {"pitch_extent", c.pitch_extent},
          {"sequential_hops", c.sequential_hops}};
}

pipeline::PipelineConfig configFromJson(const json& j) {
  pipeline::PipelineConfig c;
  c.splat.radius_px = j.at("radius_px").get<int>();
  c.splat.points_per_pixel = j.at("points_per_pixel").get<int>();
  c.splat.depth_tolerance = j.at("depth_tolerance").get<double>();
  c.splat.coverage_threshold = j.at("coverage_threshold").get<double>();
  c.erode_px = j.at("erode_px").get<int>();
  c.known_fraction = j.at("known_fraction").get<double>();
  c.samples = j.at("samples").get<int>();
  c.temperature = j.at("temperature").get<double>();
  c.feather_px = j.at("feather_px").get<int>();
  c.fill_iters = j.at("fill_iters").get<int>();
  c.max_hole_fraction = j.at("max_hole_fraction").get<double>();
  c.yaw_extent = j.at("yaw_extent").get<double>();
  c.pitch_extent = j.at("pitch_extent").get<double>();
  c.sequential_hops = j.at("sequential_hops").get<int>();
  return c;
}

namespace {

std::string numbered(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

}  // namespace

void saveScene(const std::string& dir, const pipeline::SceneState& state) {
  SS_CHECK(state.codebook && state.model, "saveScene: codebook and model are required");
  fs::create_directories(fs::path(dir) / "clouds");
  fs::create_directories(fs::path(dir) / "supports");
  vq::saveCodebook((fs::path(dir) / "codebook.pscb").string(), *state.codebook);
  ar::saveModel((fs::path(dir) / "model.psar").string(), *state.model);

  json clouds = json::array();
  for (size_t i = 0; i < state.clouds.size(); ++i) {
    const std::string file = "clouds/" + numbered(static_cast<int>(i)) + ".pspc";
    io::savePointCloud((fs::path(dir) / file).string(), state.clouds[i].cloud);
    clouds.push_back({{"file", file},
                      {"origin", state.clouds[i].origin == pipeline::CloudOrigin::kInput ? "input" : "support"}});
  }
  json supports = json::array();
  for (size_t i = 0; i < state.support_views.size(); ++i) {
    const pipeline::SupportView& v = state.support_views[i];
    const std::string stem = "supports/" + numbered(static_cast<int>(i));
    io::writePng((fs::path(dir) / (stem + ".png")).string(), v.image);
    io::writeDepthPng((fs::path(dir) / (stem + "_depth.png")).string(), v.depth);
    supports.push_back({{"pose", poseToJson(v.pose)},
                        {"image", stem + ".png"},
                        {"depth", stem + "_depth.png"},
                        {"unknown_tokens", v.unknown_tokens},
                        {"new_points", v.new_points},
                        {"cloud_index", v.cloud_index}});
  }
  const json manifest = {{"format", "scenesynth-scene"},
                         {"version", 1},
                         {"intrinsics", intrinsicsToJson(state.intrinsics)},
                         {"base_pose", poseToJson(state.base_pose)},
                         {"strategy", pipeline::strategyName(state.strategy)},
                         {"seed", state.seed},
                         {"config", configToJson(state.config)},
                         {"codebook", "codebook.pscb"},
                         {"model", "model.psar"},
                         {"clouds", clouds},
                         {"support_views", supports}};
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
  SS_CHECK(out.good(), "saveScene: cannot write manifest");
  out << manifest.dump(2) << "\n";
  SS_CHECK(out.good(), "saveScene: manifest write failed");
}

pipeline::SceneState loadScene(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  SS_CHECK(in.good(), "loadScene: no manifest.json in " + dir);
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(std::string("loadScene: malformed manifest: ") + e.what());
  }
  try {
    SS_CHECK(m.at("format") == "scenesynth-scene" && m.at("version") == 1, "loadScene: unsupported manifest");
    pipeline::SceneState state;
    state.intrinsics = intrinsicsFromJson(m.at("intrinsics"));
    state.base_pose = poseFromJson(m.at("base_pose"));
    state.strategy = pipeline::parseStrategy(m.at("strategy").get<std::string>());
    state.seed = m.at("seed").get<uint64_t>();
    state.config = configFromJson(m.at("config"));
    state.codebook = std::make_shared<const vq::Codebook>(
        vq::loadCodebook((fs::path(dir) / m.at("codebook").get<std::string>()).string()));
    state.model = std::make_shared<const ar::ArModel>(
        ar::loadModel((fs::path(dir) / m.at("model").get<std::string>()).string()));
    for (const auto& c : m.at("clouds")) {
      const std::string origin = c.at("origin").get<std::string>();
      SS_CHECK(origin == "input" || origin == "support", "loadScene: bad cloud origin");
      state.clouds.push_back({io::loadPointCloud((fs::path(dir) / c.at("file").get<std::string>()).string()),
                              origin == "input" ? pipeline::CloudOrigin::kInput : pipeline::CloudOrigin::kSupport});
    }
    for (const auto& s : m.at("support_views")) {
      pipeline::SupportView v;
      v.pose = poseFromJson(s.at("pose"));
      v.image = io::readPng((fs::path(dir) / s.at("image").get<std::string>()).string());
      v.depth = io::readDepthPng((fs::path(dir) / s.at("depth").get<std::string>()).string());
      v.unknown_tokens = s.at("unknown_tokens").get<int>();
      v.new_points = s.at("new_points").get<size_t>();
      v.cloud_index = s.at("cloud_index").get<int>();
      SS_CHECK(v.cloud_index >= -1 && v.cloud_index < static_cast<int>(state.clouds.size()),
               "loadScene: support cloud index out of range");
      state.support_views.push_back(std::move(v));
    }
    return state;
  } catch (const json::exception& e) {
    throw Error(std::string("loadScene: malformed manifest: ") + e.what());
  }
}

}  // namespace scenesynth::scene_io
