#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dancecam/core/types.hpp"

namespace dancecam::data {

// Procedural paired sequences for fixtures and desk-scale training. Music
// has a steady beat with accented beats; keyframes sit on accented beats; the
// camera tweens between keyframes with an eased, monotone curve and cuts at
// every keyframe; the dancer is a 60-joint point cloud around a moving root.
struct SyntheticOptions {
  int beat_period = 15;     // frames per beat (120 bpm at 30 fps)
  int max_beats_per_shot = 4;
  double root_radius = 1.0;  // amplitude of the dancer's root path, metres
};

SequenceBundle makeSyntheticSequence(const std::string& name, int frames, std::uint64_t seed,
                                     const SyntheticOptions& opts = {});

// Consecutive pieces of a sequence with the given lengths; each keeps the
// song id and its start offset.
std::vector<SequenceBundle> splitPieces(const SequenceBundle& song, const std::vector<int>& lengths);

struct DatasetOptions {
  int train_songs = 4;
  int test_songs = 2;
  int pieces_per_song = 2;
  int min_piece = 17 * kFps;
  int max_piece = 35 * kFps;
  std::uint64_t seed = 0;
  SyntheticOptions sequence;
};

// Raw layout consumed by preprocess: <dir>/train/<piece>/ and <dir>/test/<piece>/.
void writeSyntheticRaw(const std::filesystem::path& dir, const DatasetOptions& opts);

}  // namespace dancecam::data
