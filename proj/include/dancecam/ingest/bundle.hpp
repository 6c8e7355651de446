#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "dancecam/core/types.hpp"

namespace dancecam::ingest {

// A bundle is a directory:
//   meta.json    {name, song, start, fps}
//   music.bin    T x 35 float32 array
//   dance.bin    T x 60 x 3 float32 array   (or dance.json {fps, frames})
//   camera.json  optional, dense or keyframe form
//   tags.json    optional {fps, keyframes: [frame, ...]}
SequenceBundle loadBundle(const std::filesystem::path& dir);
// Same, with music features supplied by the caller instead of music.bin.
SequenceBundle loadBundle(const std::filesystem::path& dir, const MusicTrack* music);
void saveBundle(const SequenceBundle& bundle, const std::filesystem::path& dir);

// Sparse keyframe camera as stored in the keyframe form of camera.json.
// `tween` optionally holds the tween values for frames [frame, next - 1].
struct CameraKeyframe {
  int frame = 0;
  CameraPosed pose;
  std::vector<double> tween;
};

nlohmann::json cameraToJson(const CameraTrack& camera, int fps = kFps);
nlohmann::json keyframesToJson(const std::vector<CameraKeyframe>& keys, int fps = kFps);
nlohmann::json poseToJson(const CameraPosed& p);
CameraPosed poseFromJson(const nlohmann::json& j);

// Parses either camera form; keyframe cameras are densified to `length`
// frames. Sets *keyframe_frames when the keyframe form was read.
CameraTrack cameraFromJson(const nlohmann::json& j, Eigen::Index length,
                           std::vector<int>* keyframe_frames = nullptr);
std::vector<CameraKeyframe> keyframesFromJson(const nlohmann::json& j);

// Evaluates keyframes frame by frame: stored tween values when present,
// otherwise linear ramps; holds the first pose before the first keyframe and
// the last pose after the last keyframe.
CameraTrack densifyKeyframes(const std::vector<CameraKeyframe>& keys, Eigen::Index length);

nlohmann::json tagsToJson(const KeyframeTags& tags);
KeyframeTags tagsFromJson(const nlohmann::json& j, std::size_t length);

nlohmann::json readJsonFile(const std::filesystem::path& p);
void writeJsonFile(const std::filesystem::path& p, const nlohmann::json& j);

// Pieces contiguous in the same source song are concatenated. Output is
// ordered by (song, start). Throws FormatError on overlap.
std::vector<SequenceBundle> stitchAdjacent(std::vector<SequenceBundle> pieces);

// Lengths outside [17 s, 35 s] for unstitched test pieces.
std::vector<std::string> checkTestPieceLengths(const std::vector<SequenceBundle>& pieces);

}  // namespace dancecam::ingest
