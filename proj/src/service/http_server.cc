// Eigen (via service.h) must precede httplib: <resolv.h> defines a `_res` macro.
#include "scenesynth/service.h"

#include <httplib.h>

namespace scenesynth::service {

using nlohmann::json;

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
};

namespace {

void sendJson(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void sendError(httplib::Response& res, const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const ServiceError& e) {
    sendJson(res, e.httpStatus(), e.body());
  } catch (const json::exception& e) {
    sendJson(res, 400, {{"error", {{"code", "bad_request"}, {"message", e.what()}}}});
  } catch (const std::exception& e) {
    sendJson(res, 500, {{"error", {{"code", "internal"}, {"message", e.what()}}}});
  }
}

json errorBody(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const ServiceError& e) {
    return e.body();
  } catch (const std::exception& e) {
    return {{"error", {{"code", "internal"}, {"message", e.what()}}}};
  }
}

}  // namespace

HttpServer::HttpServer(Service& service) : impl_(new Impl{service, {}}) {
  httplib::Server& server = impl_->server;
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    sendJson(res, 200, {{"ok", true}});
  });
  for (const char* endpoint : {"create_session", "look", "set_strategy", "save", "load", "stats"}) {
    const std::string name = endpoint;
    server.Post("/" + name, [this, name](const httplib::Request& req, httplib::Response& res) {
      try {
        const json body = req.body.empty() ? json::object() : json::parse(req.body);
        sendJson(res, 200, impl_->service.handle(name, body));
      } catch (...) {
        sendError(res, std::current_exception());
      }
    });
  }
  server.Post("/panorama", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = req.body.empty() ? json::object() : json::parse(req.body);
      // Resolve the session up front so that unknown ids get a plain error response.
      impl_->service.registry().get(body.at("session_id").get<std::string>());
    } catch (...) {
      sendError(res, std::current_exception());
      return;
    }
    res.set_chunked_content_provider(
        "application/x-ndjson", [this, body](size_t, httplib::DataSink& sink) {
          auto emit = [&sink](const json& event) {
            const std::string line = event.dump() + "\n";
            sink.write(line.data(), line.size());
          };
          try {
            emit(impl_->service.handle("panorama", body, emit));
          } catch (...) {
            json err = errorBody(std::current_exception());
            err["event"] = "error";
            emit(err);
          }
          sink.done();
          return true;
        });
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace scenesynth::service
