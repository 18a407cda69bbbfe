#include "scenesynth/service.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>

#include <openssl/evp.h>

#include "scenesynth/io.h"
#include "scenesynth/scene_io.h"
#include "scenesynth/training.h"
#include "scenesynth/world.h"

namespace scenesynth::service {

namespace fs = std::filesystem;
using nlohmann::json;

ServiceError::ServiceError(std::string code, const std::string& message, int http_status, json extra)
    : Error(message), code_(std::move(code)), http_status_(http_status), extra_(std::move(extra)) {}

json ServiceError::body() const {
  json err = extra_;
  err["code"] = code_;
  err["message"] = what();
  return {{"error", err}};
}

std::string defaultDataDir() {
  const char* env = std::getenv("SCENESYNTH_DATA_DIR");
  return env && *env ? env : "scenesynth-data";
}

std::string base64Encode(const std::vector<uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<size_t>(n));
  return out;
}

std::vector<uint8_t> base64Decode(const std::string& text) {
  if (text.empty()) return {};
  SS_CHECK(text.size() % 4 == 0, "base64: length must be a multiple of 4");
  std::vector<uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  SS_CHECK(n >= 0, "base64: invalid input");
  size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<size_t>(n) - pad);
  return out;
}

namespace {

ServiceError badRequest(const std::string& message) { return ServiceError("bad_request", message, 400); }

template <typename T>
T field(const json& req, const char* name) {
  if (!req.contains(name)) throw badRequest(std::string("missing field '") + name + "'");
  try {
    return req.at(name).get<T>();
  } catch (const json::exception&) {
    throw badRequest(std::string("field '") + name + "' has the wrong type");
  }
}

template <typename T>
T optional(const json& req, const char* name, T fallback) {
  return req.contains(name) ? field<T>(req, name) : fallback;
}

std::string newSessionId() {
  static std::mutex mutex;
  static std::random_device device;
  std::lock_guard lock(mutex);
  const uint64_t v = (static_cast<uint64_t>(device()) << 32) ^ device();
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void writeRevision(const std::string& dir, uint64_t revision) {
  std::ofstream out(fs::path(dir) / "session.json");
  out << json{{"revision", revision}}.dump() << "\n";
}

uint64_t readRevision(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "session.json");
  if (!in.good()) return 0;
  try {
    return json::parse(in).at("revision").get<uint64_t>();
  } catch (const json::exception&) {
    return 0;
  }
}

pipeline::Strategy strategyField(const json& req) {
  try {
    return pipeline::parseStrategy(optional<std::string>(req, "strategy", "support_first"));
  } catch (const ServiceError&) {
    throw;
  } catch (const Error& e) {
    throw badRequest(e.what());
  }
}

}  // namespace

SessionRegistry::SessionRegistry(std::string data_dir, size_t capacity)
    : data_dir_(std::move(data_dir)), capacity_(capacity) {
  SS_CHECK(capacity_ >= 1, "session registry capacity must be >= 1");
}

std::string SessionRegistry::sessionDir(const std::string& id) const {
  return (fs::path(data_dir_) / "sessions" / id).string();
}

std::shared_ptr<Session> SessionRegistry::create(pipeline::SceneState state) {
  auto session = std::make_shared<Session>();
  session->state = std::move(state);
  std::lock_guard lock(mutex_);
  do {
    session->id = newSessionId();
  } while (sessions_.count(session->id) || fs::exists(sessionDir(session->id)));
  insertLocked(session);
  return session;
}

std::shared_ptr<Session> SessionRegistry::get(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it != sessions_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second.second);
    return it->second.first;
  }
  static const std::regex kIdPattern("[0-9a-f]{16}");
  const std::string dir = sessionDir(id);
  if (!std::regex_match(id, kIdPattern) || !fs::exists(fs::path(dir) / "manifest.json"))
    throw ServiceError("no_session", "unknown session '" + id + "'", 404);
  auto session = std::make_shared<Session>();
  session->id = id;
  session->state = scene_io::loadScene(dir);
  session->revision = readRevision(dir);
  insertLocked(session);
  return session;
}

size_t SessionRegistry::liveCount() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

void SessionRegistry::insertLocked(const std::shared_ptr<Session>& session) {
  lru_.push_front(session->id);
  sessions_[session->id] = {session, lru_.begin()};
  while (sessions_.size() > capacity_) evictLocked();
}

void SessionRegistry::evictLocked() {
  const std::string id = lru_.back();
  auto it = sessions_.find(id);
  {
    std::shared_lock session_lock(it->second.first->mutex);
    const std::string dir = sessionDir(id);
    scene_io::saveScene(dir, it->second.first->state);
    writeRevision(dir, it->second.first->revision);
  }
  sessions_.erase(it);
  lru_.pop_back();
}

Service::Service(ServiceOptions options)
    : options_(std::move(options)), registry_(options_.data_dir, options_.capacity) {
  codebook_ = std::make_shared<const vq::Codebook>(vq::loadCodebook(options_.codebook_path));
  model_ = std::make_shared<const ar::ArModel>(ar::loadModel(options_.model_path));
  SS_CHECK(model_->config().num_tokens == codebook_->size(), "service: model and codebook disagree on K");
}

json Service::handle(const std::string& endpoint, const json& request, const EventSink& sink) {
  if (!request.is_object()) throw badRequest("request body must be a JSON object");
  if (endpoint == "create_session") return createSession(request);
  if (endpoint == "look") return look(request);
  if (endpoint == "panorama") return panorama(request, sink);
  if (endpoint == "set_strategy") return setStrategy(request);
  if (endpoint == "save") return save(request);
  if (endpoint == "load") return load(request);
  if (endpoint == "stats") return stats(request);
  throw ServiceError("unknown_endpoint", "unknown endpoint '" + endpoint + "'", 404);
}

json Service::createSession(const json& req) {
  pipeline::SceneInput input;
  geometry::CameraIntrinsics k = world::defaultIntrinsics();
  try {
    if (req.contains("fixture")) {
      input = training::fixtureInput(world::RoomSpec::procedural(field<uint64_t>(req, "fixture")), k);
    } else {
      input.image = io::decodePng(base64Decode(field<std::string>(req, "image_png_base64")));
      input.depth = io::decodeDepthPng(base64Decode(field<std::string>(req, "depth_png_base64")));
      if (req.contains("intrinsics")) k = scene_io::intrinsicsFromJson(req.at("intrinsics"));
      if (req.contains("pose")) input.pose = scene_io::poseFromJson(req.at("pose"));
      if (input.image.height() != k.height || input.image.width() != k.width ||
          input.depth.height() != k.height || input.depth.width() != k.width)
        throw badRequest("image, depth and intrinsics sizes disagree");
    }
  } catch (const ServiceError&) {
    throw;
  } catch (const std::exception& e) {
    throw badRequest(e.what());
  }
  pipeline::PipelineConfig cfg = options_.config;
  cfg.samples = optional<int>(req, "samples", cfg.samples);
  cfg.temperature = optional<double>(req, "temperature", cfg.temperature);
  if (cfg.samples < 1 || cfg.temperature < 0) throw badRequest("samples must be >= 1 and temperature >= 0");
  if (k.height % codebook_->patch != 0 || k.width % codebook_->patch != 0)
    throw badRequest("image size must be divisible by the codebook patch size");

  pipeline::SceneState state = pipeline::initScene({input}, k, cfg, optional<uint64_t>(req, "seed", 0));
  state.strategy = strategyField(req);
  state.codebook = codebook_;
  state.model = model_;
  auto session = registry_.create(std::move(state));
  return {{"session_id", session->id},
          {"revision", session->revision.load()},
          {"strategy", pipeline::strategyName(session->state.strategy)},
          {"width", k.width},
          {"height", k.height}};
}

json Service::look(const json& req) {
  auto session = registry_.get(field<std::string>(req, "session_id"));
  const double yaw = optional<double>(req, "yaw", 0.0);
  const double pitch = optional<double>(req, "pitch", 0.0);
  const double step = optional<double>(req, "step", 0.0);
  std::shared_lock lock(session->mutex);
  const geometry::Pose pose = geometry::lookPose(session->state.base_pose, yaw, pitch, step);
  pipeline::ViewRender view;
  try {
    view = pipeline::renderView(session->state, pose);
  } catch (const pipeline::CoverageError& e) {
    throw ServiceError("needs_support", e.what(), 409,
                       {{"nearest_direction", e.nearestDirection()}, {"hole_fraction", e.holeFraction()}});
  }
  return {{"session_id", session->id},
          {"revision", ++session->revision},
          {"frame_png_base64", base64Encode(io::encodePng(view.image))},
          {"width", view.image.width()},
          {"height", view.image.height()},
          {"coverage_fraction", view.coverage_fraction},
          {"outpainted", view.outpainted},
          {"yaw", yaw},
          {"pitch", pitch},
          {"step", step}};
}

json Service::panorama(const json& req, const EventSink& sink) {
  auto session = registry_.get(field<std::string>(req, "session_id"));
  std::unique_lock lock(session->mutex);
  pipeline::SceneState& state = session->state;
  const double yaw = optional<double>(req, "yaw_extent", state.config.yaw_extent);
  const double pitch = optional<double>(req, "pitch_extent", state.config.pitch_extent);
  if (yaw < 0 || pitch < 0) throw badRequest("extents must be >= 0");
  state.config.yaw_extent = yaw;
  state.config.pitch_extent = pitch;
  pipeline::synthesizePanorama(state, yaw, pitch,
                               [&](int index, const std::string& direction, const pipeline::OutpaintReport& r) {
                                 if (!sink) return;
                                 sink({{"event", "progress"},
                                       {"index", index},
                                       {"total", 8},
                                       {"direction", direction},
                                       {"unknown_tokens", r.unknown_tokens},
                                       {"new_points", r.new_points},
                                       {"points", state.pointCount()}});
                               });
  return {{"event", "done"},
          {"session_id", session->id},
          {"revision", ++session->revision},
          {"points", state.pointCount()},
          {"supports", state.support_views.size()}};
}

json Service::setStrategy(const json& req) {
  auto session = registry_.get(field<std::string>(req, "session_id"));
  if (!req.contains("strategy")) throw badRequest("missing field 'strategy'");
  const pipeline::Strategy strategy = strategyField(req);
  std::unique_lock lock(session->mutex);
  pipeline::SceneState& state = session->state;
  const bool reset = strategy != state.strategy;
  if (reset) {
    // Synthesis restarts from the inputs under the new strategy.
    std::erase_if(state.clouds, [](const pipeline::TaggedCloud& c) { return c.origin != pipeline::CloudOrigin::kInput; });
    state.support_views.clear();
    state.strategy = strategy;
  }
  return {{"session_id", session->id},
          {"strategy", pipeline::strategyName(state.strategy)},
          {"reset", reset},
          {"revision", ++session->revision}};
}

namespace {

std::string sceneName(const json& req) {
  const std::string name = field<std::string>(req, "name");
  static const std::regex kName("[A-Za-z0-9_-]{1,64}");
  if (!std::regex_match(name, kName)) throw badRequest("scene names use [A-Za-z0-9_-], at most 64 characters");
  return name;
}

}  // namespace

json Service::save(const json& req) {
  auto session = registry_.get(field<std::string>(req, "session_id"));
  const std::string name = sceneName(req);
  const std::string dir = (fs::path(options_.data_dir) / "scenes" / name).string();
  std::shared_lock lock(session->mutex);
  fs::remove_all(dir);
  scene_io::saveScene(dir, session->state);
  return {{"session_id", session->id}, {"name", name}, {"path", dir}};
}

json Service::load(const json& req) {
  const std::string name = sceneName(req);
  const std::string dir = (fs::path(options_.data_dir) / "scenes" / name).string();
  if (!fs::exists(fs::path(dir) / "manifest.json"))
    throw ServiceError("no_scene", "no saved scene named '" + name + "'", 404);
  pipeline::SceneState state = scene_io::loadScene(dir);
  auto session = registry_.create(std::move(state));
  return {{"session_id", session->id},
          {"revision", session->revision.load()},
          {"strategy", pipeline::strategyName(session->state.strategy)},
          {"width", session->state.intrinsics.width},
          {"height", session->state.intrinsics.height}};
}

json Service::stats(const json& req) {
  auto session = registry_.get(field<std::string>(req, "session_id"));
  std::shared_lock lock(session->mutex);
  const pipeline::SceneState& state = session->state;
  json clouds = json::array();
  std::map<uint16_t, size_t> provenance;
  for (const auto& c : state.clouds) {
    clouds.push_back({{"origin", c.origin == pipeline::CloudOrigin::kInput ? "input" : "support"},
                      {"points", c.cloud.size()}});
    for (uint16_t s : c.cloud.source) ++provenance[s];
  }
  json prov = json::object();
  for (const auto& [tag, n] : provenance) prov[std::to_string(tag)] = n;
  json supports = json::array();
  for (const auto& v : state.support_views) {
    supports.push_back({{"pose", scene_io::poseToJson(v.pose)},
                        {"unknown_tokens", v.unknown_tokens},
                        {"new_points", v.new_points},
                        {"cloud_index", v.cloud_index}});
  }
  return {{"session_id", session->id},
          {"revision", session->revision.load()},
          {"strategy", pipeline::strategyName(state.strategy)},
          {"points", state.pointCount()},
          {"clouds", clouds},
          {"supports", supports},
          {"provenance", prov}};
}

}  // namespace scenesynth::service
