#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include "pipeline_fixture.h"
#include "scenesynth/service.h"
#include "test_util.h"

// After service.h: httplib pulls in <resolv.h>.
#include <httplib.h>

#include "scenesynth/io.h"

using namespace scenesynth;
using namespace scenesynth::service;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    vq::saveCodebook(dir_ / "cb.pscb", *test::smallModels().codebook);
    ar::saveModel(dir_ / "m.psar", *test::smallModels().model);
  }

  ServiceOptions options(size_t capacity = 16) {
    ServiceOptions o;
    o.codebook_path = dir_ / "cb.pscb";
    o.model_path = dir_ / "m.psar";
    o.data_dir = dir_ / "data";
    o.capacity = capacity;
    o.config = test::smallConfig();
    return o;
  }

  static std::string expectError(Service& svc, const std::string& endpoint, const json& req, int status) {
    try {
      svc.handle(endpoint, req);
    } catch (const ServiceError& e) {
      EXPECT_EQ(e.httpStatus(), status) << e.what();
      EXPECT_EQ(e.body()["error"]["code"], e.code());
      return e.code();
    }
    ADD_FAILURE() << endpoint << " did not fail";
    return "";
  }

  static Image frame(const json& look) {
    return io::decodePng(base64Decode(look.at("frame_png_base64").get<std::string>()));
  }

  test::TempDir dir_{"service"};
};

}  // namespace

TEST(Base64, KnownVectorsAndRoundTrip) {
  auto bytes = [](const std::string& s) { return std::vector<uint8_t>(s.begin(), s.end()); };
  EXPECT_EQ(base64Encode(bytes("")), "");
  EXPECT_EQ(base64Encode(bytes("f")), "Zg==");
  EXPECT_EQ(base64Encode(bytes("fo")), "Zm8=");
  EXPECT_EQ(base64Encode(bytes("foobar")), "Zm9vYmFy");
  Rng rng(1);
  for (int n = 0; n < 50; ++n) {
    std::vector<uint8_t> v(n);
    for (auto& b : v) b = static_cast<uint8_t>(uniformIndex(rng, 256));
    ASSERT_EQ(base64Decode(base64Encode(v)), v);
  }
  EXPECT_THROW(base64Decode("abc"), Error);
  EXPECT_THROW(base64Decode("a!c="), Error);
}

TEST_F(ServiceTest, LookAtTheInputPoseReturnsTheInput) {
  Service svc(options());
  const json created = svc.handle("create_session", {{"fixture", 41}});
  EXPECT_EQ(created["strategy"], "support_first");
  EXPECT_EQ(created["width"], 64);
  const std::string id = created["session_id"];
  const json look = svc.handle("look", {{"session_id", id}});
  const Image input = training::fixtureInput(world::RoomSpec::procedural(41), world::defaultIntrinsics()).image;
  EXPECT_LE(test::maxAbsDiff(frame(look), input), 1.0 / 255 + 1e-6);
  EXPECT_FALSE(look["outpainted"]);
  const json again = svc.handle("look", {{"session_id", id}, {"yaw", 0}, {"pitch", 0}, {"step", 0}});
  EXPECT_EQ(again["frame_png_base64"], look["frame_png_base64"]);
  EXPECT_GT(again["revision"].get<uint64_t>(), look["revision"].get<uint64_t>());
}

TEST_F(ServiceTest, CreateFromUploadedImages) {
  Service svc(options());
  const auto in = training::fixtureInput(world::RoomSpec::procedural(42), world::defaultIntrinsics());
  const json created = svc.handle("create_session", {{"image_png_base64", base64Encode(io::encodePng(in.image))},
                                                     {"depth_png_base64", base64Encode(io::encodeDepthPng(in.depth))},
                                                     {"strategy", "sequential"},
                                                     {"seed", 5}});
  EXPECT_EQ(created["strategy"], "sequential");
  const json look = svc.handle("look", {{"session_id", created["session_id"]}});
  EXPECT_LE(test::maxAbsDiff(frame(look), in.image), 1.0 / 255 + 1e-6);
  expectError(svc, "create_session", {{"image_png_base64", "????"}, {"depth_png_base64", ""}}, 400);
  expectError(svc, "create_session",
              {{"image_png_base64", base64Encode(io::encodePng(Image(8, 8)))},
               {"depth_png_base64", base64Encode(io::encodeDepthPng(in.depth))}},
              400);
}

TEST_F(ServiceTest, ErrorCodes) {
  Service svc(options());
  const std::string id = svc.handle("create_session", {{"fixture", 43}})["session_id"];
  EXPECT_EQ(expectError(svc, "look", {{"session_id", "0123456789abcdef"}}, 404), "no_session");
  EXPECT_EQ(expectError(svc, "look", {{"session_id", "../../etc"}}, 404), "no_session");
  EXPECT_EQ(expectError(svc, "look", json::object(), 400), "bad_request");
  EXPECT_EQ(expectError(svc, "look", {{"session_id", id}, {"yaw", "left"}}, 400), "bad_request");
  EXPECT_EQ(expectError(svc, "teleport", json::object(), 404), "unknown_endpoint");
  EXPECT_EQ(expectError(svc, "look", json::array(), 400), "bad_request");
  EXPECT_EQ(expectError(svc, "create_session", {{"fixture", 43}, {"strategy", "greedy"}}, 400), "bad_request");
  EXPECT_EQ(expectError(svc, "create_session", {{"fixture", 43}, {"samples", 0}}, 400), "bad_request");
  EXPECT_EQ(expectError(svc, "load", {{"name", "never-saved"}}, 404), "no_scene");
  EXPECT_EQ(expectError(svc, "save", {{"session_id", id}, {"name", "../x"}}, 400), "bad_request");
  EXPECT_EQ(expectError(svc, "panorama", {{"session_id", id}, {"yaw_extent", -1}}, 400), "bad_request");
}

TEST_F(ServiceTest, FarLookNeedsSupportUntilPanorama) {
  Service svc(options());
  const std::string id = svc.handle("create_session", {{"fixture", 44}})["session_id"];
  try {
    svc.handle("look", {{"session_id", id}, {"yaw", -38}, {"pitch", 0}});
    ADD_FAILURE() << "expected needs_support";
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.code(), "needs_support");
    EXPECT_EQ(e.httpStatus(), 409);
    EXPECT_EQ(e.body()["error"]["nearest_direction"], "left");
    EXPECT_GT(e.body()["error"]["hole_fraction"].get<double>(), 0.02);
  }
  std::vector<json> events;
  const json done = svc.handle("panorama", {{"session_id", id}}, [&](const json& e) { events.push_back(e); });
  ASSERT_EQ(events.size(), 8u);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(events[i]["event"], "progress");
    EXPECT_EQ(events[i]["index"], i);
    EXPECT_EQ(events[i]["total"], 8);
  }
  EXPECT_EQ(events[1]["direction"], "left");
  EXPECT_EQ(done["event"], "done");
  EXPECT_EQ(done["points"], events.back()["points"]);
  const json look = svc.handle("look", {{"session_id", id}, {"yaw", -38}, {"pitch", 0}});
  EXPECT_FALSE(look["outpainted"]);
  // A second panorama finds every support already covered.
  const json second = svc.handle("panorama", {{"session_id", id}});
  EXPECT_EQ(second["points"], done["points"]);
  EXPECT_EQ(svc.handle("look", {{"session_id", id}, {"yaw", -38}, {"pitch", 0}})["frame_png_base64"],
            look["frame_png_base64"]);
}

TEST_F(ServiceTest, SetStrategyResetsToTheInputs) {
  Service svc(options());
  const std::string id = svc.handle("create_session", {{"fixture", 45}})["session_id"];
  svc.handle("panorama", {{"session_id", id}, {"yaw_extent", 20}, {"pitch_extent", 10}});
  const json same = svc.handle("set_strategy", {{"session_id", id}, {"strategy", "support_first"}});
  EXPECT_FALSE(same["reset"]);
  EXPECT_EQ(svc.handle("stats", {{"session_id", id}})["supports"].size(), 8u);
  const json changed = svc.handle("set_strategy", {{"session_id", id}, {"strategy", "no_accumulation"}});
  EXPECT_TRUE(changed["reset"]);
  const json stats = svc.handle("stats", {{"session_id", id}});
  EXPECT_EQ(stats["strategy"], "no_accumulation");
  EXPECT_EQ(stats["supports"].size(), 0u);
  EXPECT_EQ(stats["clouds"].size(), 1u);
  EXPECT_EQ(stats["provenance"].size(), 1u);
  // Without accumulation every look outpaints on the fly.
  EXPECT_TRUE(svc.handle("look", {{"session_id", id}, {"yaw", 30}})["outpainted"]);
  EXPECT_EQ(expectError(svc, "set_strategy", {{"session_id", id}}, 400), "bad_request");
}

TEST_F(ServiceTest, SaveAndLoadReproduceLooks) {
  Service svc(options());
  const std::string id = svc.handle("create_session", {{"fixture", 46}})["session_id"];
  svc.handle("panorama", {{"session_id", id}});
  const json look = svc.handle("look", {{"session_id", id}, {"yaw", 25}, {"pitch", -10}});
  const json saved = svc.handle("save", {{"session_id", id}, {"name", "room_46"}});
  EXPECT_TRUE(std::filesystem::exists(saved["path"].get<std::string>() + "/manifest.json"));
  const json loaded = svc.handle("load", {{"name", "room_46"}});
  EXPECT_NE(loaded["session_id"], id);
  const json again = svc.handle("look", {{"session_id", loaded["session_id"]}, {"yaw", 25}, {"pitch", -10}});
  EXPECT_EQ(again["frame_png_base64"], look["frame_png_base64"]);
  EXPECT_EQ(svc.handle("stats", {{"session_id", loaded["session_id"]}})["points"],
            svc.handle("stats", {{"session_id", id}})["points"]);
}

TEST_F(ServiceTest, EvictedSessionsReloadTransparently) {
  Service svc(options(2));
  const std::string first = svc.handle("create_session", {{"fixture", 47}})["session_id"];
  svc.handle("panorama", {{"session_id", first}, {"yaw_extent", 20}, {"pitch_extent", 10}});
  const json look = svc.handle("look", {{"session_id", first}, {"yaw", 15}});
  const uint64_t revision = look["revision"];
  svc.handle("create_session", {{"fixture", 48}});
  svc.handle("create_session", {{"fixture", 49}});
  EXPECT_EQ(svc.registry().liveCount(), 2u);
  EXPECT_TRUE(std::filesystem::exists(svc.registry().sessionDir(first) + "/manifest.json"));
  const json back = svc.handle("look", {{"session_id", first}, {"yaw", 15}});
  EXPECT_EQ(back["frame_png_base64"], look["frame_png_base64"]);
  EXPECT_GT(back["revision"].get<uint64_t>(), revision);
  EXPECT_EQ(svc.registry().liveCount(), 2u);
}

TEST_F(ServiceTest, ConcurrentLooksAgree) {
  Service svc(options());
  const std::string id = svc.handle("create_session", {{"fixture", 50}})["session_id"];
  svc.handle("panorama", {{"session_id", id}, {"yaw_extent", 20}, {"pitch_extent", 10}});
  const std::string expected = svc.handle("look", {{"session_id", id}, {"yaw", 10}})["frame_png_base64"];
  std::vector<std::thread> threads;
  std::vector<std::string> frames(8);
  std::vector<uint64_t> revisions(8);
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      const json r = svc.handle("look", {{"session_id", id}, {"yaw", 10}});
      frames[t] = r["frame_png_base64"];
      revisions[t] = r["revision"];
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& f : frames) EXPECT_EQ(f, expected);
  EXPECT_EQ(std::set<uint64_t>(revisions.begin(), revisions.end()).size(), 8u);
}

TEST_F(ServiceTest, HttpBindingStreamsPanoramaEvents) {
  Service svc(options());
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread runner([&] { server.listen(); });
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(300, 0);
  for (int i = 0; i < 100 && !client.Get("/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));

  auto created = client.Post("/create_session", json{{"fixture", 51}}.dump(), "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 200);
  const std::string id = json::parse(created->body)["session_id"];

  auto missing = client.Post("/look", json{{"session_id", "0000000000000000"}}.dump(), "application/json");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["error"]["code"], "no_session");
  auto garbage = client.Post("/look", "{oops", "application/json");
  ASSERT_TRUE(garbage);
  EXPECT_EQ(garbage->status, 400);
  auto far = client.Post("/look", json{{"session_id", id}, {"yaw", 38}}.dump(), "application/json");
  ASSERT_TRUE(far);
  EXPECT_EQ(far->status, 409);

  auto pano = client.Post("/panorama", json{{"session_id", id}}.dump(), "application/json");
  ASSERT_TRUE(pano);
  EXPECT_EQ(pano->status, 200);
  EXPECT_EQ(pano->get_header_value("Content-Type"), "application/x-ndjson");
  std::istringstream lines(pano->body);
  std::vector<json> events;
  for (std::string line; std::getline(lines, line);) events.push_back(json::parse(line));
  ASSERT_EQ(events.size(), 9u);
  EXPECT_EQ(events[0]["event"], "progress");
  EXPECT_EQ(events.back()["event"], "done");

  auto look = client.Post("/look", json{{"session_id", id}, {"yaw", 38}}.dump(), "application/json");
  ASSERT_TRUE(look);
  EXPECT_EQ(look->status, 200);
  EXPECT_EQ(frame(json::parse(look->body)).width(), 64);
  auto bad_pano = client.Post("/panorama", json{{"session_id", "ffffffffffffffff"}}.dump(), "application/json");
  ASSERT_TRUE(bad_pano);
  EXPECT_EQ(bad_pano->status, 404);

  server.stop();
  runner.join();
}
