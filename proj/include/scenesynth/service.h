#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "scenesynth/pipeline.h"

namespace scenesynth::service {

// An error carried back to the client as {"error": {"code": ..., ...}}.
class ServiceError : public Error {
 public:
  ServiceError(std::string code, const std::string& message, int http_status,
               nlohmann::json extra = nlohmann::json::object());
  const std::string& code() const { return code_; }
  int httpStatus() const { return http_status_; }
  nlohmann::json body() const;

 private:
  std::string code_;
  int http_status_;
  nlohmann::json extra_;
};

struct Session {
  std::string id;
  pipeline::SceneState state;
  std::shared_mutex mutex;  // one writer, many readers
  std::atomic<uint64_t> revision{0};
};

struct ServiceOptions {
  std::string codebook_path;
  std::string model_path;
  std::string data_dir;  // persisted sessions and saved scenes
  size_t capacity = 16;
  pipeline::PipelineConfig config;
};

// Data directory from SCENESYNTH_DATA_DIR, else ./scenesynth-data.
std::string defaultDataDir();

// LRU map of live sessions. Evicted sessions are written to
// <data_dir>/sessions/<id> and reloaded transparently on next access.
class SessionRegistry {
 public:
  SessionRegistry(std::string data_dir, size_t capacity);

  std::shared_ptr<Session> create(pipeline::SceneState state);
  // Throws ServiceError "no_session" for unknown ids.
  std::shared_ptr<Session> get(const std::string& id);
  size_t liveCount() const;
  std::string sessionDir(const std::string& id) const;

 private:
  void insertLocked(const std::shared_ptr<Session>& session);
  void evictLocked();

  std::string data_dir_;
  size_t capacity_;
  mutable std::mutex mutex_;
  std::list<std::string> lru_;  // most recent first
  std::map<std::string, std::pair<std::shared_ptr<Session>, std::list<std::string>::iterator>> sessions_;
  uint64_t next_id_ = 1;
};

using EventSink = std::function<void(const nlohmann::json&)>;

class Service {
 public:
  explicit Service(ServiceOptions options);

  // Dispatches one request; `sink` receives streamed events (panorama) before
  // the final response is returned.
  nlohmann::json handle(const std::string& endpoint, const nlohmann::json& request,
                        const EventSink& sink = {});

  SessionRegistry& registry() { return registry_; }
  const ServiceOptions& options() const { return options_; }

  nlohmann::json createSession(const nlohmann::json& request);
  nlohmann::json look(const nlohmann::json& request);
  nlohmann::json panorama(const nlohmann::json& request, const EventSink& sink);
  nlohmann::json setStrategy(const nlohmann::json& request);
  nlohmann::json save(const nlohmann::json& request);
  nlohmann::json load(const nlohmann::json& request);
  nlohmann::json stats(const nlohmann::json& request);

 private:
  ServiceOptions options_;
  std::shared_ptr<const vq::Codebook> codebook_;
  std::shared_ptr<const ar::ArModel> model_;
  SessionRegistry registry_;
};

// HTTP/1.1 binding: POST /<endpoint> with a JSON body; panorama streams
// newline-delimited JSON events.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  // Binds to host:port (port 0 picks a free port) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  void listen();  // blocks
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string base64Encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> base64Decode(const std::string& text);

}  // namespace scenesynth::service
