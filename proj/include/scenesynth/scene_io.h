#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "scenesynth/pipeline.h"

namespace scenesynth::scene_io {

// Scene directory: manifest.json, codebook.pscb, model.psar, clouds/NN.pspc,
// supports/NN.png and supports/NN_depth.png. Output is byte-for-byte
// deterministic for a given state.
void saveScene(const std::string& dir, const pipeline::SceneState& state);
pipeline::SceneState loadScene(const std::string& dir);

nlohmann::json poseToJson(const geometry::Pose& pose);
geometry::Pose poseFromJson(const nlohmann::json& j);
nlohmann::json intrinsicsToJson(const geometry::CameraIntrinsics& k);
geometry::CameraIntrinsics intrinsicsFromJson(const nlohmann::json& j);
nlohmann::json configToJson(const pipeline::PipelineConfig& config);
pipeline::PipelineConfig configFromJson(const nlohmann::json& j);

}  // namespace scenesynth::scene_io
