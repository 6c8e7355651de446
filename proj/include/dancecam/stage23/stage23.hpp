#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "dancecam/core/geometry.hpp"
#include "dancecam/core/keyframes.hpp"
#include "dancecam/model/context.hpp"
#include "dancecam/nn/optim.hpp"
#include "dancecam/stage23/tween.hpp"

namespace dancecam::stage23 {

struct LossWeights {
  double rec = 1.0;
  double vel = 1.0;
  double acc = 1.0;
  double ba = 0.1;

  void validate() const;
};

struct VisibilityParams {
  double aspect = kDefaultAspect;
  double sharpness = kDefaultSharpness;
};

struct Stage23Config {
  model::ModelDims dims{.n_layers = 6};
  LossWeights weights;
  VisibilityParams visibility;
  unsigned seed = 0;

  void validate() const;
  nlohmann::json toJson() const;
  static Stage23Config fromJson(const nlohmann::json& j);
};

// One keyframe interval [t1, t2-1] with its window anchored at t1.
struct IntervalJob {
  Interval interval;
  ingest::Window window;
};

IntervalJob makeJob(const SequenceBundle& bundle, const CameraTrack& camera_history, Interval iv, int h, int w);

class Stage23Model {
 public:
  explicit Stage23Model(Stage23Config cfg, model::FeatureStats stats = {});

  // Stage 2: w poses for t1 .. t1+w-1 in raw units (w x 8); dist and fov pass
  // through range-preserving output maps.
  nn::Var windowPoses(const nn::Context& ctx, const ingest::Window& w) const;
  // Rows t1 and t2-1 of windowPoses (2 x 8).
  nn::Var keyframePoses(const nn::Context& ctx, const IntervalJob& job) const;

  // Stage 3: raw increments for t1 .. t1+w-1 (w x 1) given the two keyframe
  // poses (2 x 8, raw units).
  nn::Var windowIncrements(const nn::Context& ctx, const IntervalJob& job, const nn::Var& keyframes) const;

  const Stage23Config& config() const { return cfg_; }
  const model::FeatureStats& stats() const { return stats_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  void save(const std::filesystem::path& path) const;
  static Stage23Model load(const std::filesystem::path& path);

 private:
  nn::Var outputMap(const nn::Var& z) const;
  nn::Var normalizePoses(const nn::Var& poses) const;

  Stage23Config cfg_;
  model::FeatureStats stats_;
  nn::ParameterSet params_;
  model::MusicDanceContext context2_, context3_;
  nn::StreamEncoder camera2_, camera3_;
  nn::Decoder decoder2_, decoder3_;
  nn::Linear head2_, head3_;
};

std::pair<CameraPosed, CameraPosed> synthKeyframes(const Stage23Model& model, const IntervalJob& job);
TweenComputation tweenValues(const Stage23Model& model, const IntervalJob& job, const CameraPosed& c1,
                             const CameraPosed& c2);

struct LossTerms {
  nn::Var total;
  double rec = 0.0, vel = 0.0, acc = 0.0, ba = 0.0;
};

// Losses on frames [iv.t1, iv.t2-1] of full-length tracks: mean squared error
// of poses, first and second differences, and the body-attention term
// mean |Jm - Jm_hat * Jm| over joints x frames with Jm the hard mask of the
// ground truth and Jm_hat the soft mask of the prediction. `joints[t]` holds
// the joint positions of frame t.
LossTerms stage23Losses(const nn::Var& pred, const CameraTrack& gt, const std::vector<JointPositions<double>>& joints,
                        Interval iv, const LossWeights& weights, const VisibilityParams& vis = {});

// Soft body-attention term on a pred block (n x 8) against gt masks (n x J).
nn::Var bodyAttentionLoss(const nn::Var& pred, const std::vector<JointPositions<double>>& joints,
                          const Eigen::MatrixXd& gt_masks, const VisibilityParams& vis);

struct TrainOptions {
  int epochs = 10;
  int batch_size = 32;
  double lr = 1e-4;
  double lr_floor = 0.05;
  long max_steps = -1;
  bool verbose = false;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0, rec = 0.0, vel = 0.0, acc = 0.0, ba = 0.0;
};

// Training sample: interval job plus its ground truth and dance frames.
struct TrainSample {
  IntervalJob job;
  CameraTrack gt;  // frames t1 .. t2-1
  std::vector<JointPositions<double>> joints;
};

std::vector<TrainSample> makeTrainSamples(const SequenceBundle& bundle, int h, int w);

// Loss of one sample through stage 2, stage 3, monotone tweening and
// reconstruction.
LossTerms sampleLoss(const Stage23Model& model, const nn::Context& ctx, const TrainSample& s);

class Stage23Trainer {
 public:
  Stage23Trainer(Stage23Model& model, TrainOptions opts, long total_steps);
  EpochLog step(const std::vector<const TrainSample*>& batch);

 private:
  Stage23Model& model_;
  TrainOptions opts_;
  nn::Adam adam_;
  long total_steps_;
  long step_ = 0;
};

Stage23Model trainStage23(const std::vector<SequenceBundle>& train, Stage23Config cfg, const TrainOptions& opts,
                          std::vector<EpochLog>* log = nullptr);

struct IntervalRecord {
  Interval interval;
  CameraPosed start, end;
  Eigen::VectorXd rho_hat;
};

struct SynthesisOptions {
  // Pose pinned at an interval's first frame t1 / last frame t2-1, replacing
  // the stage-2 output for that endpoint.
  std::map<int, CameraPosed> pinned_start;
  std::map<int, CameraPosed> pinned_end;
  // When false, stage 2 is not run and every endpoint must be pinned.
  bool run_stage2 = true;
  // Incremental mode: intervals whose flag is false are copied from
  // `previous` (which also serves as their camera history).
  const CameraTrack* previous = nullptr;
  std::vector<bool> resynthesize;
};

struct SynthesisResult {
  CameraTrack camera;
  std::vector<IntervalRecord> intervals;
  std::vector<int> resynthesized;  // interval indices that were recomputed
};

// Alternating stage 2 / stage 3 inference over adjacent keyframe pairs; each
// reconstructed interval is appended to the camera history of the next.
SynthesisResult synthesizeCamera(const SequenceBundle& bundle, const KeyframeTags& tags, const Stage23Model& model,
                                 const SynthesisOptions& opts = {});

// Stage-3-only inputs from user keyframe poses: tags from the pose frames
// (canonicalized and split), missing poses at inserted frames interpolated
// linearly, and each interval ending at the point (L-1)/L of the way to the
// next keyframe pose.
struct GivenKeyframes {
  KeyframeTags tags;
  SynthesisOptions options;
};
GivenKeyframes keyframesGiven(const std::map<int, CameraPosed>& poses, Eigen::Index length, int max_gap);

}  // namespace dancecam::stage23
