#pragma once

#include <string>
#include <vector>

#include "scenesynth/world.h"

namespace scenesynth::corpus_io {

// On-disk training corpus: corpus.json, pairs/NNNNN_{src,tgt}[_depth].png and
// views/RR_VV.png (codebook fitting views).
struct CorpusDir {
  std::vector<uint64_t> room_seeds;
  std::vector<world::CurriculumStage> curriculum;
  world::CorpusOptions options;
  std::vector<world::CorpusPair> pairs;
};

// Renders every planned pair and the codebook views of each room into `dir`.
CorpusDir writeCorpus(const std::string& dir, const std::vector<world::RoomSpec>& rooms, int pairs_per_room,
                      const std::vector<world::CurriculumStage>& curriculum,
                      const world::CorpusOptions& options = {});

CorpusDir readCorpusManifest(const std::string& dir);

std::vector<Image> readCorpusViews(const std::string& dir);

// Loads the stored frames and builds the examples; pairs with nothing to
// outpaint are counted as skipped.
world::Corpus loadCorpusExamples(const std::string& dir, const vq::Codebook& codebook);

}  // namespace scenesynth::corpus_io
