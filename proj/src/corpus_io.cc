#include "scenesynth/corpus_io.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "scenesynth/io.h"
#include "scenesynth/parallel.h"
#include "scenesynth/scene_io.h"
#include "scenesynth/training.h"

namespace scenesynth::corpus_io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string numbered(int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, i);
  return buf;
}

std::string pairPath(const std::string& dir, int i, const char* suffix) {
  return (fs::path(dir) / "pairs" / (numbered(i, 5) + suffix)).string();
}

}  // namespace

CorpusDir writeCorpus(const std::string& dir, const std::vector<world::RoomSpec>& rooms, int pairs_per_room,
                      const std::vector<world::CurriculumStage>& curriculum, const world::CorpusOptions& options) {
  CorpusDir out;
  out.curriculum = curriculum;
  out.options = options;
  out.pairs = world::planCorpus(rooms, pairs_per_room, curriculum, options);
  for (const auto& r : rooms) out.room_seeds.push_back(r.seed);

  fs::create_directories(fs::path(dir) / "pairs");
  fs::create_directories(fs::path(dir) / "views");
  const int n = static_cast<int>(out.pairs.size());
  parallelFor(0, n, [&](int i) {
    const world::CorpusPair& p = out.pairs[i];
    const world::RgbdFrame src = world::raycastRender(rooms[p.room], options.intrinsics, p.source, options.raycast);
    const world::RgbdFrame tgt = world::raycastRender(rooms[p.room], options.intrinsics, p.target, options.raycast);
    io::writePng(pairPath(dir, i, "_src.png"), src.image);
    io::writeDepthPng(pairPath(dir, i, "_src_depth.png"), src.depth);
    io::writePng(pairPath(dir, i, "_tgt.png"), tgt.image);
    io::writeDepthPng(pairPath(dir, i, "_tgt_depth.png"), tgt.depth);
  });
  parallelFor(0, static_cast<int>(rooms.size()), [&](int r) {
    const std::vector<Image> views = training::codebookImages({rooms[r]}, options.intrinsics);
    for (size_t v = 0; v < views.size(); ++v)
      io::writePng((fs::path(dir) / "views" / (numbered(r, 2) + "_" + numbered(static_cast<int>(v), 2) + ".png")).string(),
                   views[v]);
  });

  json manifest;
  manifest["format"] = "scenesynth-corpus";
  manifest["version"] = 1;
  manifest["rooms"] = out.room_seeds;
  manifest["intrinsics"] = scene_io::intrinsicsToJson(options.intrinsics);
  manifest["options"] = {{"radius_px", options.splat.radius_px},
                         {"points_per_pixel", options.splat.points_per_pixel},
                         {"depth_tolerance", options.splat.depth_tolerance},
                         {"coverage_threshold", options.splat.coverage_threshold},
                         {"erode_px", options.erode_px},
                         {"known_fraction", options.known_fraction},
                         {"max_translation", options.max_translation},
                         {"pitch_cap_deg", options.pitch_cap_deg},
                         {"supersample", options.raycast.supersample}};
  json stages = json::array();
  for (const auto& s : curriculum) stages.push_back({{"max_rotation_deg", s.max_rotation_deg}, {"iterations", s.iterations}});
  manifest["curriculum"] = stages;
  json pairs = json::array();
  for (const auto& p : out.pairs)
    pairs.push_back({{"room", p.room},
                     {"stage", p.stage},
                     {"seed", p.seed},
                     {"source", scene_io::poseToJson(p.source)},
                     {"target", scene_io::poseToJson(p.target)}});
  manifest["pairs"] = pairs;
  std::ofstream f(fs::path(dir) / "corpus.json");
  f << manifest.dump(2) << "\n";
  SS_CHECK(f.good(), "cannot write corpus manifest in " + dir);
  return out;
}

CorpusDir readCorpusManifest(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "corpus.json");
  SS_CHECK(f.good(), "no corpus.json in " + dir);
  json m;
  try {
    m = json::parse(f);
  } catch (const json::exception& e) {
    throw Error(dir + "/corpus.json: " + e.what());
  }
  SS_CHECK(m.value("format", "") == "scenesynth-corpus", dir + ": not a corpus directory");
  SS_CHECK(m.value("version", 0) == 1, dir + ": unsupported corpus version");
  CorpusDir out;
  try {
    out.room_seeds = m.at("rooms").get<std::vector<uint64_t>>();
    out.options.intrinsics = scene_io::intrinsicsFromJson(m.at("intrinsics"));
    const json& o = m.at("options");
    out.options.splat.radius_px = o.at("radius_px").get<int>();
    out.options.splat.points_per_pixel = o.at("points_per_pixel").get<int>();
    out.options.splat.depth_tolerance = o.at("depth_tolerance").get<double>();
    out.options.splat.coverage_threshold = o.at("coverage_threshold").get<double>();
    out.options.erode_px = o.at("erode_px").get<int>();
    out.options.known_fraction = o.at("known_fraction").get<double>();
    out.options.max_translation = o.at("max_translation").get<double>();
    out.options.pitch_cap_deg = o.at("pitch_cap_deg").get<double>();
    out.options.raycast.supersample = o.at("supersample").get<int>();
    for (const auto& s : m.at("curriculum"))
      out.curriculum.push_back({s.at("max_rotation_deg").get<double>(), s.at("iterations").get<int>()});
    for (const auto& p : m.at("pairs")) {
      world::CorpusPair pair;
      pair.room = p.at("room").get<int>();
      pair.stage = p.at("stage").get<int>();
      pair.seed = p.at("seed").get<uint64_t>();
      pair.source = scene_io::poseFromJson(p.at("source"));
      pair.target = scene_io::poseFromJson(p.at("target"));
      out.pairs.push_back(pair);
    }
  } catch (const json::exception& e) {
    throw Error(dir + "/corpus.json: " + e.what());
  }
  return out;
}

std::vector<Image> readCorpusViews(const std::string& dir) {
  const fs::path views = fs::path(dir) / "views";
  SS_CHECK(fs::is_directory(views), "no views/ directory in " + dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(views))
    if (e.path().extension() == ".png") paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  SS_CHECK(!paths.empty(), "no views in " + views.string());
  std::vector<Image> images;
  for (const auto& p : paths) images.push_back(io::readPng(p));
  return images;
}

world::Corpus loadCorpusExamples(const std::string& dir, const vq::Codebook& codebook) {
  codebook.validate();
  const CorpusDir manifest = readCorpusManifest(dir);
  const int n = static_cast<int>(manifest.pairs.size());
  std::vector<world::CorpusExample> built(n);
  std::vector<uint8_t> keep(n, 0);
  parallelFor(0, n, [&](int i) {
    world::RgbdFrame src{io::readPng(pairPath(dir, i, "_src.png")), io::readDepthPng(pairPath(dir, i, "_src_depth.png"))};
    world::RgbdFrame tgt{io::readPng(pairPath(dir, i, "_tgt.png")), io::readDepthPng(pairPath(dir, i, "_tgt_depth.png"))};
    keep[i] = world::buildExampleFromFrames(src, tgt, manifest.pairs[i], codebook, manifest.options, built[i]);
  });
  world::Corpus corpus;
  for (int i = 0; i < n; ++i) {
    if (keep[i]) {
      corpus.examples.push_back(std::move(built[i]));
    } else {
      ++corpus.skipped;
    }
  }
  return corpus;
}

}  // namespace scenesynth::corpus_io
