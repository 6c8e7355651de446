#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dancecam/core/types.hpp"

namespace dancecam::ingest {

struct Audio {
  std::vector<float> samples;  // mono, [-1, 1]
  int sample_rate = 0;

  double seconds() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

// PCM 8/16/24/32-bit integer or 32-bit float WAV; channels are averaged.
Audio readWav(const std::filesystem::path& path);
void writeWav(const std::filesystem::path& path, const Audio& audio);  // 16-bit PCM mono

// Column layout of the 35-d per-frame music features.
namespace feat {
inline constexpr int kEnvelope = 0;
inline constexpr int kMfcc = 1;     // 20 columns
inline constexpr int kChroma = 21;  // 12 columns, pitch class C = 0 ... B = 11
inline constexpr int kBeat = 33;
inline constexpr int kPeak = 34;
}  // namespace feat

struct FeatureConfig {
  int fps = kFps;
  int n_mels = 128;
  int n_mfcc = 20;
  double top_db = 80.0;
  double tempo_prior_bpm = 120.0;
  double beat_tightness = 100.0;
};

// Frames are centred at round(i * sr / fps); exactly round(n * fps / sr)
// frames are produced.
MusicTrack extractMusicFeatures(std::span<const float> samples, int sample_rate,
                                const FeatureConfig& cfg = {});

}  // namespace dancecam::ingest
