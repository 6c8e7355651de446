#include "dancecam/detector/detector.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace dancecam::detector {

void DetectorConfig::validate() const {
  if (dims.h <= 0 || dims.w <= 0) throw RangeError("detector config: h and w must be positive");
  if (!(lambda_kf > 0.0)) throw RangeError("detector config: lambda_kf must be positive");
  if (dims.embed_dim <= 0 || dims.n_layers <= 0 || dims.n_heads <= 0 || dims.embed_dim % dims.n_heads)
    throw RangeError("detector config: embed_dim must be a positive multiple of n_heads");
}

nlohmann::json DetectorConfig::toJson() const {
  return {{"h", dims.h},           {"w", dims.w},           {"embed_dim", dims.embed_dim},
          {"n_layers", dims.n_layers}, {"n_heads", dims.n_heads}, {"dropout", dims.dropout},
          {"lambda_kf", lambda_kf}, {"seed", seed}};
}

DetectorConfig DetectorConfig::fromJson(const nlohmann::json& j) {
  DetectorConfig c;
  c.dims.h = j.value("h", c.dims.h);
  c.dims.w = j.value("w", c.dims.w);
  c.dims.embed_dim = j.value("embed_dim", c.dims.embed_dim);
  c.dims.n_layers = j.value("n_layers", c.dims.n_layers);
  c.dims.n_heads = j.value("n_heads", c.dims.n_heads);
  c.dims.dropout = j.value("dropout", c.dims.dropout);
  c.lambda_kf = j.value("lambda_kf", c.lambda_kf);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

double clampProb(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

void checkLengths(Eigen::Index a, Eigen::Index b) {
  if (a != b) throw ShapeError("wce_loss: probs and labels differ in length");
  if (a == 0) throw ShapeError("wce_loss: empty window");
}

}  // namespace

double wceLoss(const Eigen::VectorXd& probs, const Eigen::VectorXd& gt, double lambda) {
  checkLengths(probs.size(), gt.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = clampProb(probs(i));
    acc += lambda * gt(i) * std::log(p) + (1.0 - gt(i)) * std::log(1.0 - p);
  }
  return -acc / static_cast<double>(probs.size());
}

Eigen::VectorXd wceLossGrad(const Eigen::VectorXd& probs, const Eigen::VectorXd& gt, double lambda) {
  checkLengths(probs.size(), gt.size());
  const double n = static_cast<double>(probs.size());
  Eigen::VectorXd g(probs.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double raw = probs(i);
    if (raw < kProbEps || raw > 1.0 - kProbEps) {
      g(i) = 0.0;  // clamped
      continue;
    }
    g(i) = -(lambda * gt(i) / raw - (1.0 - gt(i)) / (1.0 - raw)) / n;
  }
  return g;
}

nn::Var wceLoss(const nn::Var& probs, const Eigen::VectorXd& gt, double lambda) {
  if (probs.cols() != 1) throw ShapeError("wce_loss: probs must be a column");
  const Eigen::VectorXd p = probs.value().col(0);
  nn::Matrix v(1, 1);
  v(0, 0) = wceLoss(p, gt, lambda);
  const Eigen::VectorXd g = wceLossGrad(p, gt, lambda);
  return nn::customOp(std::move(v), {probs}, [g](const nn::Matrix& go, const std::vector<nn::Matrix*>& gi) {
    if (gi[0]) gi[0]->col(0) += go(0, 0) * g;
  });
}

KeyframeDetector::KeyframeDetector(DetectorConfig cfg, model::FeatureStats stats)
    : cfg_(cfg), stats_(std::move(stats)) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const int d = cfg_.dims.embed_dim;
  context_ = model::MusicDanceContext(params_, "stage1", d, rng);
  tag_encoder_ = nn::StreamEncoder(params_, "stage1.tag_encoder", 1, d, rng);
  decoder_ = nn::Decoder(params_, "stage1.decoder", cfg_.dims.n_layers, d, 2 * d, cfg_.dims.n_heads, rng);
  head_ = nn::Linear(params_, "stage1.head", d, 1, rng);
  // Keyframes are a small minority of frames; start near that prior.
  params_[head_.biasIndex()].value.setConstant(-2.0);
}

nn::Var KeyframeDetector::forward(const nn::Context& ctx, const ingest::Window& w) const {
  if (w.h != cfg_.dims.h || w.w != cfg_.dims.w || w.music.rows() != w.rows() || w.dance.rows() != w.rows() ||
      w.tags.rows() != w.rows())
    throw ShapeError("detector_forward: window shape does not match the model");
  const nn::Var memory = context_(ctx, w, stats_);
  Eigen::MatrixXd tags = Eigen::MatrixXd::Zero(w.rows(), 1);
  tags.topRows(w.h) = w.tags.topRows(w.h);
  for (int r = 0; r < w.pad_front; ++r) tags(r, 0) = 0.0;
  const nn::Var target = tag_encoder_(ctx, nn::constant(std::move(tags)));
  const nn::Var y = decoder_(ctx, target, memory);
  return nn::sigmoid(head_(ctx, nn::sliceRows(y, w.h, w.w)));
}

Eigen::VectorXd KeyframeDetector::probabilities(const ingest::Window& w) const {
  const nn::Context ctx{params_};
  return forward(ctx, w).value().col(0);
}

void KeyframeDetector::save(const std::filesystem::path& path) const {
  nn::saveCheckpoint(path, {{"kind", "keyframe_detector"}, {"config", cfg_.toJson()}, {"stats", stats_.toJson()}},
                     params_);
}

KeyframeDetector KeyframeDetector::load(const std::filesystem::path& path) {
  const nlohmann::json meta = nn::readCheckpointMeta(path);
  if (meta.value("kind", "") != "keyframe_detector")
    throw FormatError(path.string() + " is not a keyframe detector checkpoint");
  KeyframeDetector m(DetectorConfig::fromJson(meta.at("config")), model::FeatureStats::fromJson(meta.at("stats")));
  nn::loadCheckpoint(path, m.params_);
  return m;
}

KeyframeTags detectKeyframes(const SequenceBundle& bundle, const KeyframeScorer& scorer, int h, int w) {
  const int T = static_cast<int>(bundle.length());
  if (T == 0) throw RangeError("detect_keyframes: empty sequence");
  KeyframeTags history(static_cast<std::size_t>(T));
  for (int t = 0; t < T;) {
    const ingest::Window win = ingest::buildWindow(bundle.music, bundle.dance, &history, nullptr, t, h, w);
    const Eigen::VectorXd probs = scorer(win);
    if (probs.size() != w) throw ShapeError("detect_keyframes: scorer returned wrong length");
    const int n = std::min(w, T - t);
    // Two-way argmax: a keyframe only when p(key) strictly exceeds p(not key).
    for (int i = 0; i < n; ++i) history.tags[t + i] = probs(i) > 0.5 ? 1 : 0;
    t += n;
  }
  return splitLongIntervals(canonicalize(std::move(history)), w);
}

KeyframeTags detectKeyframes(const SequenceBundle& bundle, const KeyframeDetector& model) {
  return detectKeyframes(
      bundle, [&](const ingest::Window& win) { return model.probabilities(win); }, model.config().dims.h,
      model.config().dims.w);
}

Eigen::VectorXd windowLabels(const SequenceBundle& b, const ingest::Window& w) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(w.w);
  if (!b.tags) throw FormatError("train_detector: bundle " + b.name + " has no keyframe tags");
  for (int i = 0; i < w.valid_future; ++i) y(i) = b.tags->isKey(static_cast<std::size_t>(w.t + i)) ? 1.0 : 0.0;
  return y;
}

DetectorTrainer::DetectorTrainer(KeyframeDetector& model, TrainOptions opts, long total_steps)
    : model_(model),
      opts_(opts),
      adam_(model.params(), nn::AdamConfig{.lr = opts.lr}),
      total_steps_(total_steps) {}

double DetectorTrainer::step(const std::vector<const ingest::Window*>& batch,
                             const std::vector<Eigen::VectorXd>& labels, Counts* counts) {
  if (batch.empty() || batch.size() != labels.size()) throw ShapeError("detector step: bad batch");
  nn::Gradients grads(model_.params());
  const double lambda = model_.config().lambda_kf;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ingest::Window& w = *batch[i];
    std::mt19937_64 rng(model_.config().seed * 1000003ull + static_cast<unsigned long long>(step_) * 7919ull + i);
    const nn::Context ctx{model_.params(), true, model_.config().dims.dropout, &rng};
    const nn::Var probs = model_.forward(ctx, w);
    // Frames past the end of the sequence carry no label.
    const int n = std::max(1, w.valid_future);
    const nn::Var loss = wceLoss(nn::sliceRows(probs, 0, n), labels[i].head(n), lambda);
    nn::backward(loss, &grads);
    total += loss.scalar();
    if (counts) {
      for (int k = 0; k < n; ++k) {
        const bool pred = probs.value()(k, 0) > 0.5;
        const bool gt = labels[i](k) > 0.5;
        counts->tp += pred && gt;
        counts->fp += pred && !gt;
        counts->fn += !pred && gt;
        counts->tn += !pred && !gt;
      }
    }
  }
  grads.scale(1.0 / static_cast<double>(batch.size()));
  adam_.step(model_.params(), grads, nn::cosineSchedule(step_, total_steps_, opts_.lr_floor));
  ++step_;
  return total / static_cast<double>(batch.size());
}

KeyframeDetector trainDetector(const std::vector<SequenceBundle>& train, DetectorConfig cfg,
                               const TrainOptions& opts, std::vector<EpochLog>* log) {
  std::vector<ingest::Window> windows;
  std::vector<Eigen::VectorXd> labels;
  for (const auto& b : train) {
    if (!b.tags) continue;
    for (auto& w : ingest::makeWindows(b, cfg.dims.h, cfg.dims.w, cfg.dims.w)) {
      labels.push_back(windowLabels(b, w));
      windows.push_back(std::move(w));
    }
  }
  if (windows.empty()) throw RangeError("train_detector: empty training split");

  KeyframeDetector model(cfg, model::FeatureStats::compute(train));
  const int bs = std::max(1, opts.batch_size);
  const long per_epoch = static_cast<long>((windows.size() + bs - 1) / bs);
  long total = per_epoch * opts.epochs;
  if (opts.max_steps > 0) total = std::min(total, opts.max_steps);
  DetectorTrainer trainer(model, opts, total);

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  long steps = 0;
  for (int epoch = 0; epoch < opts.epochs && steps < total; ++epoch) {
    std::mt19937_64 shuffle_rng(cfg.seed + 17ull * static_cast<unsigned long long>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Counts counts;
    double loss = 0.0;
    int batches = 0;
    for (std::size_t s = 0; s < order.size() && steps < total; s += static_cast<std::size_t>(bs)) {
      std::vector<const ingest::Window*> batch;
      std::vector<Eigen::VectorXd> y;
      for (std::size_t k = s; k < std::min(order.size(), s + static_cast<std::size_t>(bs)); ++k) {
        batch.push_back(&windows[order[k]]);
        y.push_back(labels[order[k]]);
      }
      loss += trainer.step(batch, y, &counts);
      ++batches;
      ++steps;
    }
    EpochLog e{epoch, loss / std::max(1, batches), counts.precision(), counts.recall()};
    if (log) log->push_back(e);
    if (opts.verbose)
      std::cerr << "stage1 epoch " << epoch << " loss " << e.loss << " precision " << e.precision << " recall "
                << e.recall << '\n';
  }
  return model;
}

}  // namespace dancecam::detector
