#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "dancecam/core/keyframes.hpp"
#include "dancecam/model/context.hpp"
#include "dancecam/nn/optim.hpp"

namespace dancecam::detector {

inline constexpr double kProbEps = 1e-7;

struct DetectorConfig {
  model::ModelDims dims;  // embed 256, 4 layers, 8 heads
  double lambda_kf = 5.0;  // positive-class weight
  unsigned seed = 0;

  void validate() const;
  nlohmann::json toJson() const;
  static DetectorConfig fromJson(const nlohmann::json& j);
};

// Weighted binary cross-entropy, mean over the window. Probabilities are
// clamped to [eps, 1 - eps].
double wceLoss(const Eigen::VectorXd& probs, const Eigen::VectorXd& gt, double lambda);
Eigen::VectorXd wceLossGrad(const Eigen::VectorXd& probs, const Eigen::VectorXd& gt, double lambda);
nn::Var wceLoss(const nn::Var& probs, const Eigen::VectorXd& gt, double lambda);

class KeyframeDetector {
 public:
  explicit KeyframeDetector(DetectorConfig cfg, model::FeatureStats stats = {});

  // Keyframe probabilities for frames t .. t+w-1 (w x 1). Future tag slots
  // of the window are ignored.
  nn::Var forward(const nn::Context& ctx, const ingest::Window& w) const;
  Eigen::VectorXd probabilities(const ingest::Window& w) const;

  const DetectorConfig& config() const { return cfg_; }
  const model::FeatureStats& stats() const { return stats_; }
  void setStats(model::FeatureStats s) { stats_ = std::move(s); }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  void save(const std::filesystem::path& path) const;
  static KeyframeDetector load(const std::filesystem::path& path);

 private:
  DetectorConfig cfg_;
  model::FeatureStats stats_;
  nn::ParameterSet params_;
  model::MusicDanceContext context_;
  nn::StreamEncoder tag_encoder_;
  nn::Decoder decoder_;
  nn::Linear head_;
};

// Anything producing w keyframe probabilities for a window.
using KeyframeScorer = std::function<Eigen::VectorXd(const ingest::Window&)>;

// Autoregressive sliding-window inference: emits min(w, remaining) tags per
// step at threshold 0.5, feeds them back as history, then canonicalizes and
// splits long gaps.
KeyframeTags detectKeyframes(const SequenceBundle& bundle, const KeyframeScorer& scorer,
                             int h = ingest::kHistory, int w = ingest::kWindow);
KeyframeTags detectKeyframes(const SequenceBundle& bundle, const KeyframeDetector& model);

struct TrainOptions {
  int epochs = 10;
  int batch_size = 32;
  double lr = 1e-4;
  double lr_floor = 0.05;  // cosine decay floor, fraction of lr
  long max_steps = -1;     // stop early after this many optimizer steps
  bool verbose = false;
};

struct Counts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  double precision() const { return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp); }
  double recall() const { return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn); }
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// One optimizer over a detector; step() is a single teacher-forced update.
class DetectorTrainer {
 public:
  DetectorTrainer(KeyframeDetector& model, TrainOptions opts, long total_steps);
  // Mean WCE over the batch before the update.
  double step(const std::vector<const ingest::Window*>& batch, const std::vector<Eigen::VectorXd>& labels,
              Counts* counts = nullptr);

 private:
  KeyframeDetector& model_;
  TrainOptions opts_;
  nn::Adam adam_;
  long total_steps_;
  long step_ = 0;
};

// Ground-truth keyframe tags of frames t .. t+w-1 (zero past the end).
Eigen::VectorXd windowLabels(const SequenceBundle& b, const ingest::Window& w);

KeyframeDetector trainDetector(const std::vector<SequenceBundle>& train, DetectorConfig cfg,
                               const TrainOptions& opts, std::vector<EpochLog>* log = nullptr);

}  // namespace dancecam::detector
