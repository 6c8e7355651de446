#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dancecam/detector/detector.hpp"
#include "dancecam/metrics/metrics.hpp"
#include "dancecam/stage23/stage23.hpp"

namespace dancecam::pipeline {

inline constexpr const char* kManifestSchema = "dancecam.manifest.v1";
inline constexpr const char* kReportSchema = "dancecam.eval.v1";

// Raw layout: <raw>/train/<piece>/ and <raw>/test/<piece>/, each piece a
// bundle directory whose music is either music.bin or audio.wav. Output:
// <out>/{train,test}/<name>/ bundles, <out>/cache/ audio features and
// <out>/manifest.json.
struct PreprocessResult {
  nlohmann::json manifest;
  std::vector<std::string> warnings;
  int cache_hits = 0;
  int cache_misses = 0;
};

PreprocessResult preprocess(const std::filesystem::path& raw, const std::filesystem::path& out);

// Bundles of one split listed in <data>/manifest.json.
std::vector<SequenceBundle> loadSplit(const std::filesystem::path& data, const std::string& split);
double manifestThetaCut(const std::filesystem::path& data);

struct RunConfig {
  std::filesystem::path data_root;
  std::filesystem::path checkpoints = "checkpoints";
  std::filesystem::path outputs = "outputs";
  detector::DetectorConfig detector;
  stage23::Stage23Config stage23;
  detector::TrainOptions train_stage1;
  stage23::TrainOptions train_stage23;
  unsigned seed = 0;
  std::string device = "cpu";

  // Applies `seed` to both model configs.
  void applySeed();
  // Throws RangeError when a referenced path is missing.
  void validate() const;
  nlohmann::json toJson() const;
  static RunConfig fromJson(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& p);
};

enum class Mode { Full, TagsGiven, KeyframesGiven };
Mode parseMode(const std::string& s);
std::string modeName(Mode m);

struct SynthesizeInputs {
  const detector::KeyframeDetector* detector = nullptr;  // full mode
  const stage23::Stage23Model* stage23 = nullptr;       // always
  std::optional<KeyframeTags> tags;                     // tags-given
  std::map<int, CameraPosed> keyframe_poses;            // keyframes-given
};

struct SynthesisOutput {
  KeyframeTags tags;
  stage23::SynthesisResult result;
};

SynthesisOutput synthesize(const SequenceBundle& bundle, Mode mode, const SynthesizeInputs& in);

// Keyframe poses from a camera file in keyframe form.
std::map<int, CameraPosed> readKeyframePoses(const std::filesystem::path& p);

struct SequenceScore {
  std::string name;
  double dmr = 0.0;
  double lcd = 0.0;
  double gt_dmr = 0.0;
};

struct EvalReport {
  std::optional<double> fid_k, fid_s, dist_k, dist_s;
  double dmr = 0.0;  // over all frames
  double lcd = 0.0;
  double gt_dmr = 0.0;
  std::optional<double> gt_dist_k, gt_dist_s;
  int n_sequences = 0;
  double theta_cut = 0.0;
  std::vector<SequenceScore> sequences;

  nlohmann::json toJson() const;
  std::string csv() const;
};

// Generated cameras are aligned with `refs`, which must carry ground truth.
EvalReport evaluate(const std::vector<SequenceBundle>& refs, const std::vector<CameraTrack>& generated,
                    double theta_cut);

}  // namespace dancecam::pipeline
