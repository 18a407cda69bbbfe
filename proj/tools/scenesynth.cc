// Command-line front end: corpus generation, training, synthesis, evaluation
// and the exploration service.

#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scenesynth/corpus_io.h"
#include "scenesynth/io.h"
#include "scenesynth/pipeline.h"
#include "scenesynth/scene_io.h"
#include "scenesynth/service.h"
#include "scenesynth/training.h"

using namespace scenesynth;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kUsageError = 2;

std::vector<double> parseNumbers(const std::string& text, size_t count, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "expected " + std::to_string(count) + " comma-separated numbers");
    }
  }
  if (out.size() != count)
    throw CLI::ValidationError(flag, "expected " + std::to_string(count) + " comma-separated numbers");
  return out;
}

std::vector<world::CurriculumStage> parseCurriculum(const std::string& text) {
  const std::vector<double> v = parseNumbers(text, 3, "--curriculum");
  if (v[2] < 0 || v[2] != std::floor(v[2])) throw CLI::ValidationError("--curriculum", "stage length must be a whole number");
  try {
    return pipeline::curriculumSchedule(v[0], v[1], static_cast<int>(v[2]));
  } catch (const Error& e) {
    throw CLI::ValidationError("--curriculum", e.what());
  }
}

// 90 degree horizontal field of view, principal point at the frame center.
geometry::CameraIntrinsics intrinsicsFor(int width, int height) {
  return {width / 2.0, width / 2.0, width / 2.0, height / 2.0, width, height};
}

struct GenWorldArgs {
  std::string out;
  int rooms = 8;
  uint64_t first_seed = 1000;
  int pairs = 60;
  std::string curriculum = "15,60,50";
};

void genWorld(const GenWorldArgs& a) {
  const auto curriculum = parseCurriculum(a.curriculum);
  const auto rooms = training::fixtureRooms(a.rooms, a.first_seed);
  const auto dir = corpus_io::writeCorpus(a.out, rooms, a.pairs, curriculum);
  std::cout << "wrote " << dir.pairs.size() << " pairs from " << rooms.size() << " rooms to " << a.out << "\n";
}

struct FitArgs {
  std::string corpus, out;
  int k = 128;
  int patch = 4;
  uint64_t seed = 7;
};

void fitCodebookCmd(const FitArgs& a) {
  const auto images = corpus_io::readCorpusViews(a.corpus);
  vq::FitReport report;
  const vq::Codebook cb = vq::fitCodebook(images, a.k, a.patch, a.seed, {}, &report);
  vq::saveCodebook(a.out, cb);
  std::cout << "codebook K=" << cb.size() << " patch=" << cb.patch << " from " << images.size()
            << " views, " << report.iterations << " iterations, objective "
            << (report.objective.empty() ? 0.0 : report.objective.back()) << "\n";
}

struct TrainArgs {
  std::string corpus, codebook, out, init;
  std::string curriculum = "15,60,50";
  double lr = 1.0;
  int batch = 60;
  uint64_t seed = 1;
  uint64_t model_seed = 42;
  int holdout = 5;
  int log_every = 25;
};

void trainAr(const TrainArgs& a) {
  const auto curriculum = parseCurriculum(a.curriculum);
  const vq::Codebook cb = vq::loadCodebook(a.codebook);
  world::Corpus corpus = corpus_io::loadCorpusExamples(a.corpus, cb);
  std::vector<world::CorpusExample> train = training::restage(std::move(corpus.examples), curriculum);
  std::vector<world::CorpusExample> held;
  if (a.holdout >= 2) std::tie(train, held) = training::splitHeldOut(train, a.holdout);
  std::cout << "examples " << train.size() << " train, " << held.size() << " held out, " << corpus.skipped
            << " skipped\n";

  ar::ArModel model = a.init.empty() ? ar::ArModel(ar::ArConfig{.num_tokens = cb.size()}, a.model_seed)
                                     : ar::loadModel(a.init);
  if (model.config().num_tokens != cb.size()) throw Error("model and codebook disagree on K");
  std::cout << "curriculum " << curriculum.size() << " stages\n";
  for (size_t s = 0; s < curriculum.size(); ++s) {
    size_t eligible = 0;
    for (const auto& ex : train) eligible += ex.stage <= static_cast<int>(s);
    std::cout << "stage " << s << " max_rotation " << curriculum[s].max_rotation_deg << " iterations "
              << curriculum[s].iterations << " examples " << eligible << "\n";
  }
  if (!held.empty())
    std::cout << "held-out nll " << training::meanNll(model, held) << " (ln K " << std::log(cb.size()) << ")\n";
  training::trainCurriculum(model, train, curriculum, {a.lr, a.batch, a.seed}, [&](const training::StepLog& l) {
    if (a.log_every > 0 && l.step % a.log_every == 0)
      std::cout << "step " << l.step << " stage " << l.stage << " max_rotation " << l.max_rotation_deg << " loss "
                << l.loss << "\n";
  });
  if (!held.empty()) std::cout << "held-out nll " << training::meanNll(model, held) << "\n";
  ar::saveModel(a.out, model);
  std::cout << "wrote " << a.out << "\n";
}

struct SynthArgs {
  std::string image, depth, codebook, model, out;
  int64_t fixture = -1;
  std::string strategy = "support_first";
  int samples = 8;
  double temperature = 0.5;
  uint64_t seed = 0;
  double yaw = 40.0, pitch = 20.0;
};

void synth(const SynthArgs& a) {
  pipeline::SceneInput input;
  geometry::CameraIntrinsics k;
  if (a.fixture >= 0) {
    k = world::defaultIntrinsics();
    input = training::fixtureInput(world::RoomSpec::procedural(static_cast<uint64_t>(a.fixture)), k);
  } else {
    if (a.image.empty() || a.depth.empty()) throw CLI::ValidationError("synth", "needs --image and --depth, or --fixture");
    input.image = io::readPng(a.image);
    input.depth = io::readDepthPng(a.depth);
    k = intrinsicsFor(input.image.width(), input.image.height());
  }
  pipeline::PipelineConfig cfg;
  cfg.samples = a.samples;
  cfg.temperature = a.temperature;
  cfg.yaw_extent = a.yaw;
  cfg.pitch_extent = a.pitch;
  pipeline::SceneState state = pipeline::initScene({input}, k, cfg, a.seed);
  state.strategy = pipeline::parseStrategy(a.strategy);
  state.codebook = std::make_shared<const vq::Codebook>(vq::loadCodebook(a.codebook));
  state.model = std::make_shared<const ar::ArModel>(ar::loadModel(a.model));
  pipeline::synthesizePanorama(state, a.yaw, a.pitch,
                               [&](int i, const std::string& dir, const pipeline::OutpaintReport& r) {
                                 std::cout << "support " << i + 1 << "/8 " << dir << " unknown_tokens "
                                           << r.unknown_tokens << " new_points " << r.new_points << "\n";
                               });
  fs::remove_all(a.out);
  scene_io::saveScene(a.out, state);
  std::cout << "wrote " << a.out << " (" << state.pointCount() << " points)\n";
}

struct RenderArgs {
  std::string scene, out;
  double yaw = 0, pitch = 0, step = 0;
};

void render(const RenderArgs& a) {
  const pipeline::SceneState state = scene_io::loadScene(a.scene);
  const pipeline::ViewRender view =
      pipeline::renderView(state, geometry::lookPose(state.base_pose, a.yaw, a.pitch, a.step));
  io::writePng(a.out, view.image);
  std::cout << "wrote " << a.out << " coverage " << view.coverage_fraction
            << (view.outpainted ? " outpainted" : "") << "\n";
}

struct EvalArgs {
  std::vector<std::string> scenes;
  int fixtures = 0;
  std::string codebook, model, out;
  std::vector<std::string> angles{"35,17.5"};
  int samples = 8;
  double temperature = 0.5;
};

void evalConsistency(const EvalArgs& a) {
  std::vector<std::pair<double, double>> angles;
  for (const auto& s : a.angles) {
    const auto v = parseNumbers(s, 2, "--angle");
    angles.emplace_back(v[0], v[1]);
  }
  if (a.scenes.empty() == (a.fixtures <= 0))
    throw CLI::ValidationError("eval-consistency", "give either --scenes or --fixtures");

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file.good()) throw Error("cannot write " + a.out);
  }
  std::ostream& os = a.out.empty() ? std::cout : file;
  auto emit = [&](const std::string& scene, const pipeline::SceneState& state) {
    for (const auto& [yaw, pitch] : angles) {
      json line{{"scene", scene}, {"strategy", pipeline::strategyName(state.strategy)}, {"yaw", yaw}, {"pitch", pitch}};
      try {
        const auto r = pipeline::consistencyEval(state, yaw, pitch);
        line["psnr_extreme_to_mid"] = r.psnr_extreme_to_mid;
        line["psnr_mid_to_extreme"] = r.psnr_mid_to_extreme;
        line["mean_psnr"] = r.mean;
        line["overlap_extreme_to_mid"] = r.overlap_extreme_to_mid;
        line["overlap_mid_to_extreme"] = r.overlap_mid_to_extreme;
      } catch (const pipeline::CoverageError& e) {
        line["error"] = {{"code", "needs_support"}, {"nearest_direction", e.nearestDirection()}, {"message", e.what()}};
      } catch (const Error& e) {
        line["error"] = {{"code", "eval_failed"}, {"message", e.what()}};
      }
      os << line.dump() << "\n" << std::flush;
    }
  };

  if (!a.scenes.empty()) {
    for (const auto& dir : a.scenes) emit(dir, scene_io::loadScene(dir));
    return;
  }
  if (a.codebook.empty() || a.model.empty())
    throw CLI::ValidationError("eval-consistency", "--fixtures needs --codebook and --model");
  auto cb = std::make_shared<const vq::Codebook>(vq::loadCodebook(a.codebook));
  auto model = std::make_shared<const ar::ArModel>(ar::loadModel(a.model));
  pipeline::PipelineConfig cfg;
  cfg.samples = a.samples;
  cfg.temperature = a.temperature;
  for (int i = 0; i < a.fixtures; ++i) {
    for (auto strategy : {pipeline::Strategy::kSupportFirst, pipeline::Strategy::kSequential,
                          pipeline::Strategy::kNoAccumulation}) {
      emit("fixture-" + std::to_string(i), training::fixtureScene(i, strategy, cfg, cb, model));
    }
  }
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8765;
  std::string codebook, model, data_dir;
  size_t capacity = 16;
};

service::HttpServer* g_server = nullptr;

void serve(const ServeArgs& a) {
  service::ServiceOptions options;
  options.codebook_path = a.codebook;
  options.model_path = a.model;
  options.data_dir = a.data_dir.empty() ? service::defaultDataDir() : a.data_dir;
  options.capacity = a.capacity;
  service::Service svc(options);
  service::HttpServer server(svc);
  const int port = server.bind(a.host, a.port);
  if (port < 0) throw Error("cannot bind " + a.host + ":" + std::to_string(a.port));
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "listening on http://" << a.host << ":" << port << " data " << options.data_dir << "\n" << std::flush;
  server.listen();
  g_server = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image 3D-consistent scene synthesis"};
  app.require_subcommand(1);

  GenWorldArgs gen;
  auto* c_gen = app.add_subcommand("gen-world", "Render a procedural training corpus");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--rooms", gen.rooms, "Number of rooms")->check(CLI::PositiveNumber);
  c_gen->add_option("--first-seed", gen.first_seed, "Seed of the first room");
  c_gen->add_option("--pairs", gen.pairs, "Pairs per room")->check(CLI::NonNegativeNumber);
  c_gen->add_option("--curriculum", gen.curriculum, "base,target,stage_len");

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit-codebook", "Fit the patch codebook on a corpus' views");
  c_fit->add_option("--corpus", fit.corpus, "Corpus directory")->required();
  c_fit->add_option("--out", fit.out, "Output codebook file")->required();
  c_fit->add_option("--k", fit.k, "Codebook size")->check(CLI::PositiveNumber);
  c_fit->add_option("--patch", fit.patch, "Patch size in pixels")->check(CLI::PositiveNumber);
  c_fit->add_option("--seed", fit.seed, "k-means seed");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train-ar", "Train the autoregressive outpainter");
  c_train->add_option("--corpus", train.corpus, "Corpus directory")->required();
  c_train->add_option("--codebook", train.codebook, "Codebook file")->required();
  c_train->add_option("--out", train.out, "Output model file")->required();
  c_train->add_option("--init", train.init, "Start from this model instead of a fresh one");
  c_train->add_option("--curriculum", train.curriculum, "base,target,stage_len");
  c_train->add_option("--lr", train.lr, "Learning rate")->check(CLI::NonNegativeNumber);
  c_train->add_option("--batch", train.batch, "Batch size")->check(CLI::PositiveNumber);
  c_train->add_option("--seed", train.seed, "Batch sampling seed");
  c_train->add_option("--model-seed", train.model_seed, "Initialization seed");
  c_train->add_option("--holdout", train.holdout, "Hold out every n-th example (0 disables)")->check(CLI::NonNegativeNumber);
  c_train->add_option("--log-every", train.log_every, "Steps between loss lines");

  SynthArgs syn;
  auto* c_syn = app.add_subcommand("synth", "Synthesize a panorama scene from one RGB-D image");
  c_syn->add_option("--image", syn.image, "Input PNG");
  c_syn->add_option("--depth", syn.depth, "Input 16-bit depth PNG, millimeters");
  c_syn->add_option("--fixture", syn.fixture, "Use the procedural room with this seed as input");
  c_syn->add_option("--codebook", syn.codebook, "Codebook file")->required();
  c_syn->add_option("--model", syn.model, "Model file")->required();
  c_syn->add_option("--out", syn.out, "Output scene directory")->required();
  c_syn->add_option("--strategy", syn.strategy, "support_first, sequential or no_accumulation")
      ->check(CLI::IsMember({"support_first", "sequential", "no_accumulation"}));
  c_syn->add_option("--samples", syn.samples, "Completions per support")->check(CLI::PositiveNumber);
  c_syn->add_option("--temperature", syn.temperature, "Sampling temperature")->check(CLI::NonNegativeNumber);
  c_syn->add_option("--seed", syn.seed, "Scene seed");
  c_syn->add_option("--yaw", syn.yaw, "Support yaw extent, degrees")->check(CLI::NonNegativeNumber);
  c_syn->add_option("--pitch", syn.pitch, "Support pitch extent, degrees")->check(CLI::NonNegativeNumber);

  RenderArgs ren;
  auto* c_ren = app.add_subcommand("render", "Render a scene directory at a pose");
  c_ren->add_option("--scene", ren.scene, "Scene directory")->required();
  c_ren->add_option("--out", ren.out, "Output PNG")->required();
  c_ren->add_option("--yaw", ren.yaw, "Degrees, positive turns right");
  c_ren->add_option("--pitch", ren.pitch, "Degrees, positive looks up");
  c_ren->add_option("--step", ren.step, "Meters along the view direction");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval-consistency", "Homography consistency report as JSON lines");
  c_ev->add_option("--scenes", ev.scenes, "Scene directories");
  c_ev->add_option("--fixtures", ev.fixtures, "Evaluate this many fixture scenes under every strategy")
      ->check(CLI::NonNegativeNumber);
  c_ev->add_option("--codebook", ev.codebook, "Codebook file (fixtures)");
  c_ev->add_option("--model", ev.model, "Model file (fixtures)");
  c_ev->add_option("--angle", ev.angles, "yaw,pitch of the extreme view; repeatable");
  c_ev->add_option("--samples", ev.samples, "Completions per support (fixtures)")->check(CLI::PositiveNumber);
  c_ev->add_option("--temperature", ev.temperature, "Sampling temperature (fixtures)")->check(CLI::NonNegativeNumber);
  c_ev->add_option("--out", ev.out, "Write the report here instead of stdout");

  ServeArgs srv;
  auto* c_srv = app.add_subcommand("serve", "Start the exploration service (HTTP/1.1, JSON)");
  c_srv->add_option("--host", srv.host, "Bind address");
  c_srv->add_option("--port", srv.port, "Port, 0 picks a free one")->check(CLI::Range(0, 65535));
  c_srv->add_option("--codebook", srv.codebook, "Codebook file")->required();
  c_srv->add_option("--model", srv.model, "Model file")->required();
  c_srv->add_option("--data-dir", srv.data_dir, "Sessions and saved scenes (default $SCENESYNTH_DATA_DIR)");
  c_srv->add_option("--capacity", srv.capacity, "Live sessions before eviction")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (e.get_exit_code() == 0) return 0;
    std::cerr << app.help();
    return kUsageError;
  }

  try {
    if (*c_gen) genWorld(gen);
    if (*c_fit) fitCodebookCmd(fit);
    if (*c_train) trainAr(train);
    if (*c_syn) synth(syn);
    if (*c_ren) render(ren);
    if (*c_ev) evalConsistency(ev);
    if (*c_srv) serve(srv);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
