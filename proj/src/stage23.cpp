#include "dancecam/stage23/stage23.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace dancecam::stage23 {

void LossWeights::validate() const {
  for (double v : {rec, vel, acc, ba})
    if (!(v >= 0.0) || !std::isfinite(v)) throw RangeError("loss weights must be finite and non-negative");
}

void Stage23Config::validate() const {
  if (dims.h < 0 || dims.w <= 0) throw RangeError("stage23 config: h must be >= 0 and w > 0");
  if (dims.embed_dim <= 0 || dims.n_layers <= 0 || dims.n_heads <= 0 || dims.embed_dim % dims.n_heads)
    throw RangeError("stage23 config: embed_dim must be a positive multiple of n_heads");
  if (!(visibility.aspect > 0.0) || !(visibility.sharpness > 0.0))
    throw RangeError("stage23 config: aspect and sharpness must be positive");
  weights.validate();
}

nlohmann::json Stage23Config::toJson() const {
  return {{"h", dims.h},
          {"w", dims.w},
          {"embed_dim", dims.embed_dim},
          {"n_layers", dims.n_layers},
          {"n_heads", dims.n_heads},
          {"dropout", dims.dropout},
          {"weights", {{"rec", weights.rec}, {"vel", weights.vel}, {"acc", weights.acc}, {"ba", weights.ba}}},
          {"aspect", visibility.aspect},
          {"sharpness", visibility.sharpness},
          {"seed", seed}};
}

Stage23Config Stage23Config::fromJson(const nlohmann::json& j) {
  Stage23Config c;
  c.dims.h = j.value("h", c.dims.h);
  c.dims.w = j.value("w", c.dims.w);
  c.dims.embed_dim = j.value("embed_dim", c.dims.embed_dim);
  c.dims.n_layers = j.value("n_layers", c.dims.n_layers);
  c.dims.n_heads = j.value("n_heads", c.dims.n_heads);
  c.dims.dropout = j.value("dropout", c.dims.dropout);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.rec = w.value("rec", c.weights.rec);
    c.weights.vel = w.value("vel", c.weights.vel);
    c.weights.acc = w.value("acc", c.weights.acc);
    c.weights.ba = w.value("ba", c.weights.ba);
  }
  c.visibility.aspect = j.value("aspect", c.visibility.aspect);
  c.visibility.sharpness = j.value("sharpness", c.visibility.sharpness);
  c.seed = j.value("seed", c.seed);
  return c;
}

IntervalJob makeJob(const SequenceBundle& bundle, const CameraTrack& camera_history, Interval iv, int h, int w) {
  const int T = static_cast<int>(bundle.length());
  if (iv.length() <= 0) throw RangeError("interval length must be at least 1");
  if (iv.length() > w) throw RangeError("interval longer than the window");
  if (iv.t1 < 0 || iv.t2 > T) throw RangeError("interval outside the sequence");
  return {iv, ingest::buildWindow(bundle.music, bundle.dance, nullptr, &camera_history, iv.t1, h, w)};
}

namespace {

constexpr double kFovMargin = 1e-6;  // keeps fov strictly inside (0, 180)

nn::Var rowConstant(const Eigen::VectorXd& v) { return nn::constant(v.transpose()); }

double inverseSoftplus(double y) {
  y = std::max(y, 1e-3);
  return y > 30.0 ? y : std::log(std::expm1(y));
}

double logit(double p) {
  p = std::clamp(p, 1e-3, 1.0 - 1e-3);
  return std::log(p / (1.0 - p));
}

}  // namespace

Stage23Model::Stage23Model(Stage23Config cfg, model::FeatureStats stats) : cfg_(cfg), stats_(std::move(stats)) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const int d = cfg_.dims.embed_dim;
  context2_ = model::MusicDanceContext(params_, "stage2", d, rng);
  camera2_ = nn::StreamEncoder(params_, "stage2.camera_encoder", kPoseDim, d, rng);
  decoder2_ = nn::Decoder(params_, "stage2.decoder", cfg_.dims.n_layers, d, 2 * d, cfg_.dims.n_heads, rng);
  head2_ = nn::Linear(params_, "stage2.head", d, kPoseDim, rng);
  context3_ = model::MusicDanceContext(params_, "stage3", d, rng);
  camera3_ = nn::StreamEncoder(params_, "stage3.camera_encoder", kPoseDim, d, rng);
  decoder3_ = nn::Decoder(params_, "stage3.decoder", cfg_.dims.n_layers, d, 2 * d, cfg_.dims.n_heads, rng);
  head3_ = nn::Linear(params_, "stage3.head", d, 1, rng);

  // Start the stage-2 output at the data mean.
  nn::Matrix& b = params_[head2_.biasIndex()].value;
  b.setZero();
  b(0, 6) = inverseSoftplus(stats_.camera_mean(6) / std::max(stats_.camera_std(6), 1e-3));
  b(0, 7) = logit(stats_.camera_mean(7) / 180.0);
}

nn::Var Stage23Model::outputMap(const nn::Var& z) const {
  Eigen::VectorXd mean6 = stats_.camera_mean.head(6), std6 = stats_.camera_std.head(6);
  const nn::Var lin = nn::addRow(nn::mulRow(nn::sliceCols(z, 0, 6), rowConstant(std6)), rowConstant(mean6));
  const nn::Var dist = nn::scale(nn::softplus(nn::sliceCols(z, 6, 1)), std::max(stats_.camera_std(6), 1e-3));
  const nn::Var fov =
      nn::addScalar(nn::scale(nn::sigmoid(nn::sliceCols(z, 7, 1)), 180.0 * (1.0 - 2.0 * kFovMargin)),
                    180.0 * kFovMargin);
  return nn::concatCols({lin, dist, fov});
}

nn::Var Stage23Model::normalizePoses(const nn::Var& poses) const {
  return nn::mulRow(nn::addRow(poses, rowConstant(-stats_.camera_mean)),
                    rowConstant(stats_.camera_std.cwiseInverse()));
}

namespace {

void checkWindow(const ingest::Window& w, const model::ModelDims& dims) {
  if (w.h != dims.h || w.w != dims.w || w.music.rows() != w.rows() || w.dance.rows() != w.rows() ||
      w.camera.rows() != w.rows() || w.camera.cols() != kPoseDim)
    throw ShapeError("stage23: window shape does not match the model");
}

void checkJob(const IntervalJob& job, const model::ModelDims& dims) {
  checkWindow(job.window, dims);
  const int L = job.interval.length();
  if (L <= 0) throw RangeError("interval length must be at least 1");
  if (L > dims.w) throw RangeError("interval longer than the window");
  if (job.window.t != job.interval.t1) throw ShapeError("stage23: window is not anchored at t1");
}

}  // namespace

nn::Var Stage23Model::windowPoses(const nn::Context& ctx, const ingest::Window& w) const {
  checkWindow(w, cfg_.dims);
  const nn::Var memory = context2_(ctx, w, stats_);
  const nn::Var target = camera2_(ctx, nn::constant(model::normalizedCameraHistory(w, stats_)));
  const nn::Var y = decoder2_(ctx, target, memory);
  return outputMap(head2_(ctx, nn::sliceRows(y, w.h, w.w)));
}

nn::Var Stage23Model::keyframePoses(const nn::Context& ctx, const IntervalJob& job) const {
  checkJob(job, cfg_.dims);
  const nn::Var poses = windowPoses(ctx, job.window);
  return nn::concatRows({nn::sliceRows(poses, 0, 1), nn::sliceRows(poses, job.interval.length() - 1, 1)});
}

nn::Var Stage23Model::windowIncrements(const nn::Context& ctx, const IntervalJob& job,
                                       const nn::Var& keyframes) const {
  checkJob(job, cfg_.dims);
  if (keyframes.rows() != 2 || keyframes.cols() != kPoseDim) throw ShapeError("stage3: keyframes must be 2 x 8");
  const ingest::Window& w = job.window;
  const Eigen::Index h = w.h;
  const nn::Var history = nn::constant(model::normalizedCameraHistory(w, stats_));
  const nn::Var keys = nn::placeRows(normalizePoses(keyframes), w.rows(), {h, h + job.interval.length() - 1});
  const nn::Var memory = context3_(ctx, w, stats_);
  const nn::Var y = decoder3_(ctx, camera3_(ctx, nn::add(history, keys)), memory);
  return head3_(ctx, nn::sliceRows(y, h, w.w));
}

void Stage23Model::save(const std::filesystem::path& path) const {
  nn::saveCheckpoint(path, {{"kind", "stage23"}, {"config", cfg_.toJson()}, {"stats", stats_.toJson()}}, params_);
}

Stage23Model Stage23Model::load(const std::filesystem::path& path) {
  const nlohmann::json meta = nn::readCheckpointMeta(path);
  if (meta.value("kind", "") != "stage23") throw FormatError(path.string() + " is not a stage23 checkpoint");
  Stage23Model m(Stage23Config::fromJson(meta.at("config")), model::FeatureStats::fromJson(meta.at("stats")));
  nn::loadCheckpoint(path, m.params_);
  return m;
}

namespace {

CameraPosed rowPose(const nn::Matrix& m, Eigen::Index r) {
  return CameraPosed::fromVector(m.row(r).transpose());
}

nn::Var poseRows(const CameraPosed& a, const CameraPosed& b) {
  nn::Matrix m(2, kPoseDim);
  m.row(0) = a.toVector().transpose();
  m.row(1) = b.toVector().transpose();
  return nn::constant(std::move(m));
}

}  // namespace

std::pair<CameraPosed, CameraPosed> synthKeyframes(const Stage23Model& model, const IntervalJob& job) {
  const nn::Context ctx{model.params()};
  const nn::Matrix kp = model.keyframePoses(ctx, job).value();
  return {rowPose(kp, 0), rowPose(kp, 1)};
}

TweenComputation tweenValues(const Stage23Model& model, const IntervalJob& job, const CameraPosed& c1,
                             const CameraPosed& c2) {
  const nn::Context ctx{model.params()};
  const nn::Matrix inc = model.windowIncrements(ctx, job, poseRows(c1, c2)).value();
  return tweenFromIncrements(Eigen::VectorXd(inc.col(0).head(job.interval.length())));
}

nn::Var bodyAttentionLoss(const nn::Var& pred, const std::vector<JointPositions<double>>& joints,
                          const Eigen::MatrixXd& gt_masks, const VisibilityParams& vis) {
  const Eigen::Index n = pred.rows();
  if (pred.cols() != kPoseDim || static_cast<Eigen::Index>(joints.size()) != n || gt_masks.rows() != n)
    throw ShapeError("body attention loss: frame counts differ");
  if (n == 0) return nn::constant(nn::Matrix::Zero(1, 1));
  const Eigen::Index J = gt_masks.cols();
  const double norm = 1.0 / static_cast<double>(n * std::max<Eigen::Index>(J, 1));
  double value = 0.0;
  nn::Matrix grad = nn::Matrix::Zero(n, kPoseDim);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (joints[t].rows() != J) throw ShapeError("body attention loss: joint counts differ");
    Eigen::VectorXd soft;
    Eigen::MatrixXd jac;
    softVisibilityJacobian(rowPose(pred.value(), t), joints[t], vis.aspect, vis.sharpness, soft, jac);
    for (Eigen::Index j = 0; j < J; ++j) {
      const double m = gt_masks(t, j);
      value += std::abs(m - soft(j) * m);
      // |m (1 - s)| with s in (0, 1): derivative -m ds when m > 0.
      if (m != 0.0) grad.row(t) -= std::abs(m) * jac.row(j);
    }
  }
  nn::Matrix v(1, 1);
  v(0, 0) = value * norm;
  grad *= norm;
  return nn::customOp(std::move(v), {pred}, [grad](const nn::Matrix& g, const std::vector<nn::Matrix*>& gi) {
    if (gi[0]) *gi[0] += g(0, 0) * grad;
  });
}

LossTerms stage23Losses(const nn::Var& pred, const CameraTrack& gt, const std::vector<JointPositions<double>>& joints,
                        Interval iv, const LossWeights& weights, const VisibilityParams& vis) {
  weights.validate();
  const int n = iv.length();
  if (n <= 0) throw RangeError("stage23 losses: empty interval");
  if (pred.cols() != kPoseDim || iv.t1 < 0 || iv.t2 > pred.rows() || iv.t2 > gt.rows() ||
      iv.t2 > static_cast<int>(joints.size()))
    throw ShapeError("stage23 losses: interval outside the tracks");

  const nn::Var p = nn::sliceRows(pred, iv.t1, n);
  const nn::Matrix g = gt.middleRows(iv.t1, n);
  const nn::Var gv = nn::constant(g);
  const nn::Var zero = nn::constant(nn::Matrix::Zero(1, 1));

  LossTerms out;
  const nn::Var rec = nn::mean(nn::square(nn::sub(p, gv)));
  nn::Var vel = zero, acc = zero;
  if (n >= 2) {
    const nn::Var dp = nn::diffRows(p), dg = nn::diffRows(gv);
    vel = nn::mean(nn::square(nn::sub(dp, dg)));
    if (n >= 3) acc = nn::mean(nn::square(nn::sub(nn::diffRows(dp), nn::diffRows(dg))));
  }

  std::vector<JointPositions<double>> block(joints.begin() + iv.t1, joints.begin() + iv.t2);
  const Eigen::Index J = block.front().rows();
  Eigen::MatrixXd masks(n, J);
  for (int t = 0; t < n; ++t) {
    const auto hard = visibleJoints(poseAt(gt, iv.t1 + t), block[t], vis.aspect);
    for (Eigen::Index j = 0; j < J; ++j) masks(t, j) = hard[j];
  }
  const nn::Var ba = bodyAttentionLoss(p, block, masks, vis);

  out.total = nn::add(nn::add(nn::scale(rec, weights.rec), nn::scale(vel, weights.vel)),
                      nn::add(nn::scale(acc, weights.acc), nn::scale(ba, weights.ba)));
  out.rec = rec.scalar();
  out.vel = vel.scalar();
  out.acc = acc.scalar();
  out.ba = ba.scalar();
  return out;
}

std::vector<TrainSample> makeTrainSamples(const SequenceBundle& bundle, int h, int w) {
  if (!bundle.camera || !bundle.tags) throw FormatError("stage23 training: bundle " + bundle.name +
                                                        " needs camera and keyframe tags");
  const CameraTrack& cam = *bundle.camera;
  const KeyframeTags tags = splitLongIntervals(canonicalize(*bundle.tags), w);
  std::vector<TrainSample> out;
  for (const Interval& iv : keyframeIntervals(tags)) {
    TrainSample s{makeJob(bundle, cam, iv, h, w), cam.middleRows(iv.t1, iv.length()), {}};
    for (int t = iv.t1; t < iv.t2; ++t) s.joints.push_back(danceFrame(bundle.dance, t));
    out.push_back(std::move(s));
  }
  return out;
}

LossTerms sampleLoss(const Stage23Model& model, const nn::Context& ctx, const TrainSample& s) {
  const int L = s.job.interval.length();
  const nn::Var kp = model.keyframePoses(ctx, s.job);
  const nn::Var inc = model.windowIncrements(ctx, s.job, kp);
  const nn::Var rho = tweenFromIncrements(nn::sliceRows(inc, 0, L));
  const nn::Var pred = reconstructInterval(nn::sliceRows(kp, 0, 1), nn::sliceRows(kp, 1, 1), rho);
  return stage23Losses(pred, s.gt, s.joints, {0, L}, model.config().weights, model.config().visibility);
}

Stage23Trainer::Stage23Trainer(Stage23Model& model, TrainOptions opts, long total_steps)
    : model_(model),
      opts_(opts),
      adam_(model.params(), nn::AdamConfig{.lr = opts.lr}),
      total_steps_(total_steps) {}

EpochLog Stage23Trainer::step(const std::vector<const TrainSample*>& batch) {
  if (batch.empty()) throw ShapeError("stage23 step: empty batch");
  nn::Gradients grads(model_.params());
  EpochLog e;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::mt19937_64 rng(model_.config().seed * 1000003ull + static_cast<unsigned long long>(step_) * 7919ull + i);
    const nn::Context ctx{model_.params(), true, model_.config().dims.dropout, &rng};
    const LossTerms l = sampleLoss(model_, ctx, *batch[i]);
    nn::backward(l.total, &grads);
    e.loss += l.total.scalar();
    e.rec += l.rec;
    e.vel += l.vel;
    e.acc += l.acc;
    e.ba += l.ba;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grads.scale(inv);
  adam_.step(model_.params(), grads, nn::cosineSchedule(step_, total_steps_, opts_.lr_floor));
  ++step_;
  e.loss *= inv;
  e.rec *= inv;
  e.vel *= inv;
  e.acc *= inv;
  e.ba *= inv;
  return e;
}

Stage23Model trainStage23(const std::vector<SequenceBundle>& train, Stage23Config cfg, const TrainOptions& opts,
                          std::vector<EpochLog>* log) {
  std::vector<TrainSample> samples;
  for (const auto& b : train) {
    if (!b.camera || !b.tags) continue;
    for (auto& s : makeTrainSamples(b, cfg.dims.h, cfg.dims.w)) samples.push_back(std::move(s));
  }
  if (samples.empty()) throw RangeError("train_stage23: empty training split");

  Stage23Model model(cfg, model::FeatureStats::compute(train));
  const int bs = std::max(1, opts.batch_size);
  const long per_epoch = static_cast<long>((samples.size() + bs - 1) / bs);
  long total = per_epoch * opts.epochs;
  if (opts.max_steps > 0) total = std::min(total, opts.max_steps);
  Stage23Trainer trainer(model, opts, total);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  long steps = 0;
  for (int epoch = 0; epoch < opts.epochs && steps < total; ++epoch) {
    std::mt19937_64 shuffle_rng(cfg.seed + 17ull * static_cast<unsigned long long>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLog acc{epoch};
    int batches = 0;
    for (std::size_t s = 0; s < order.size() && steps < total; s += static_cast<std::size_t>(bs)) {
      std::vector<const TrainSample*> batch;
      for (std::size_t k = s; k < std::min(order.size(), s + static_cast<std::size_t>(bs)); ++k)
        batch.push_back(&samples[order[k]]);
      const EpochLog l = trainer.step(batch);
      acc.loss += l.loss;
      acc.rec += l.rec;
      acc.vel += l.vel;
      acc.acc += l.acc;
      acc.ba += l.ba;
      ++batches;
      ++steps;
    }
    const double inv = 1.0 / std::max(1, batches);
    acc.loss *= inv;
    acc.rec *= inv;
    acc.vel *= inv;
    acc.acc *= inv;
    acc.ba *= inv;
    if (log) log->push_back(acc);
    if (opts.verbose)
      std::cerr << "stage23 epoch " << epoch << " loss " << acc.loss << " rec " << acc.rec << " vel " << acc.vel
                << " acc " << acc.acc << " ba " << acc.ba << '\n';
  }
  return model;
}

SynthesisResult synthesizeCamera(const SequenceBundle& bundle, const KeyframeTags& tags, const Stage23Model& model,
                                 const SynthesisOptions& opts) {
  const int T = static_cast<int>(bundle.length());
  const int h = model.config().dims.h, w = model.config().dims.w;
  if (T == 0) throw RangeError("synthesize_camera: empty sequence");
  if (tags.size() != static_cast<std::size_t>(T)) throw ShapeError("synthesize_camera: tags length differs");
  if (!isCanonical(tags, w)) throw RangeError("synthesize_camera: tags must be canonical with gaps <= w");
  const std::vector<Interval> intervals = keyframeIntervals(tags);
  if (opts.previous) {
    if (opts.previous->rows() != T) throw ShapeError("synthesize_camera: previous camera length differs");
    if (opts.resynthesize.size() != intervals.size())
      throw ShapeError("synthesize_camera: resynthesize flags do not match the intervals");
  }

  SynthesisResult res;
  res.camera = CameraTrack::Zero(T, kPoseDim);
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    const Interval iv = intervals[k];
    const int L = iv.length();
    if (opts.previous && !opts.resynthesize[k]) {
      res.camera.middleRows(iv.t1, L) = opts.previous->middleRows(iv.t1, L);
      res.intervals.push_back({iv, poseAt(res.camera, iv.t1), poseAt(res.camera, iv.t2 - 1), {}});
      continue;
    }
    const IntervalJob job = makeJob(bundle, res.camera, iv, h, w);
    const auto ps = opts.pinned_start.find(iv.t1);
    const auto pe = opts.pinned_end.find(iv.t2 - 1);
    const bool have_start = ps != opts.pinned_start.end(), have_end = pe != opts.pinned_end.end();
    CameraPosed start, end;
    if (L > 1 ? !(have_start && have_end) : !(have_start || have_end)) {
      if (!opts.run_stage2) throw RangeError("synthesize_camera: missing keyframe pose at interval " +
                                             std::to_string(iv.t1));
      std::tie(start, end) = synthKeyframes(model, job);
    }
    if (have_start) start = ps->second;
    if (have_end) end = pe->second;
    // A single-frame interval has one keyframe pose.
    if (L == 1) {
      if (!have_start && have_end) start = end;
      end = start;
    }
    validatePose(start);
    validatePose(end);
    const TweenComputation tc = tweenValues(model, job, start, end);
    res.camera.middleRows(iv.t1, L) = reconstructInterval(start, end, tc.rho_hat);
    res.intervals.push_back({iv, start, end, tc.rho_hat});
    res.resynthesized.push_back(static_cast<int>(k));
  }
  return res;
}

namespace {

// Pose at frame f from sparse user poses: exact at a given frame, linear
// between neighbours, held past the ends.
CameraPosed sparsePoseAt(const std::map<int, CameraPosed>& poses, int f) {
  const auto hi = poses.lower_bound(f);
  if (hi != poses.end() && hi->first == f) return hi->second;
  if (hi == poses.begin()) return hi->second;
  const auto lo = std::prev(hi);
  if (hi == poses.end()) return lo->second;
  const double rho = static_cast<double>(f - lo->first) / static_cast<double>(hi->first - lo->first);
  return interpolatePose(lo->second, hi->second, rho);
}

}  // namespace

GivenKeyframes keyframesGiven(const std::map<int, CameraPosed>& poses, Eigen::Index length, int max_gap) {
  if (length <= 0) throw RangeError("keyframes-given: empty sequence");
  if (poses.empty()) throw RangeError("keyframes-given: no keyframe poses");
  std::vector<int> frames;
  for (const auto& [f, p] : poses) {
    validatePose(p);
    frames.push_back(f);
  }
  GivenKeyframes out;
  out.tags = splitLongIntervals(
      canonicalize(KeyframeTags::fromKeyframes(static_cast<std::size_t>(length), frames)), max_gap);
  out.options.run_stage2 = false;
  for (const Interval& iv : keyframeIntervals(out.tags)) {
    const CameraPosed a = sparsePoseAt(poses, iv.t1);
    const int L = iv.length();
    out.options.pinned_start[iv.t1] = a;
    const CameraPosed b = sparsePoseAt(poses, std::min<int>(iv.t2, static_cast<int>(length) - 1));
    out.options.pinned_end[iv.t2 - 1] =
        L > 1 ? interpolatePose(a, b, static_cast<double>(L - 1) / static_cast<double>(L)) : a;
  }
  return out;
}

}  // namespace dancecam::stage23
