#include "dancecam/model/context.hpp"

#include <cmath>

namespace dancecam::model {

namespace {

constexpr double kMinStd = 1e-6;

Eigen::VectorXd safeStd(Eigen::VectorXd s) {
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (!(s(i) > kMinStd)) s(i) = 1.0;
  return s;
}

Eigen::VectorXd toVec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> fromVec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

FeatureStats FeatureStats::compute(const std::vector<SequenceBundle>& bundles) {
  FeatureStats s;
  double n_music = 0, n_dance = 0, n_cam = 0;
  Eigen::VectorXd ms = Eigen::VectorXd::Zero(kMusicDim), mq = ms;
  Eigen::Vector3d ds = Eigen::Vector3d::Zero(), dq = ds;
  Eigen::VectorXd cs = Eigen::VectorXd::Zero(kPoseDim), cq = cs;
  for (const auto& b : bundles) {
    const Eigen::MatrixXd m = b.music.cast<double>();
    ms += m.colwise().sum().transpose();
    mq += m.array().square().matrix().colwise().sum().transpose();
    n_music += static_cast<double>(m.rows());
    for (Eigen::Index t = 0; t < b.dance.rows(); ++t) {
      for (int k = 0; k < kNumJoints; ++k) {
        for (int c = 0; c < 3; ++c) {
          const double v = b.dance(t, 3 * k + c);
          ds(c) += v;
          dq(c) += v * v;
        }
      }
      n_dance += kNumJoints;
    }
    if (b.camera) {
      cs += b.camera->colwise().sum().transpose();
      cq += b.camera->array().square().matrix().colwise().sum().transpose();
      n_cam += static_cast<double>(b.camera->rows());
    }
  }
  if (n_music > 0) {
    s.music_mean = ms / n_music;
    s.music_std = safeStd(((mq / n_music).array() - s.music_mean.array().square()).max(0.0).sqrt().matrix());
  }
  if (n_dance > 0) {
    s.dance_mean = ds / n_dance;
    s.dance_std = safeStd(((dq / n_dance).array() - s.dance_mean.array().square()).max(0.0).sqrt().matrix());
  }
  if (n_cam > 0) {
    s.camera_mean = cs / n_cam;
    s.camera_std = safeStd(((cq / n_cam).array() - s.camera_mean.array().square()).max(0.0).sqrt().matrix());
  }
  return s;
}

nlohmann::json FeatureStats::toJson() const {
  return {{"music_mean", fromVec(music_mean)},   {"music_std", fromVec(music_std)},
          {"dance_mean", fromVec(dance_mean)},   {"dance_std", fromVec(dance_std)},
          {"camera_mean", fromVec(camera_mean)}, {"camera_std", fromVec(camera_std)}};
}

FeatureStats FeatureStats::fromJson(const nlohmann::json& j) {
  FeatureStats s;
  s.music_mean = toVec(j.at("music_mean"));
  s.music_std = toVec(j.at("music_std"));
  s.dance_mean = toVec(j.at("dance_mean"));
  s.dance_std = toVec(j.at("dance_std"));
  s.camera_mean = toVec(j.at("camera_mean"));
  s.camera_std = toVec(j.at("camera_std"));
  if (s.music_mean.size() != kMusicDim || s.music_std.size() != kMusicDim ||
      s.camera_mean.size() != kPoseDim || s.camera_std.size() != kPoseDim)
    throw FormatError("feature stats: wrong dimensions");
  return s;
}

Eigen::MatrixXd normalizeRows(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& std, int first, int end) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (int r = std::max(0, first); r < std::min<int>(end, static_cast<int>(x.rows())); ++r)
    out.row(r) = ((x.row(r).transpose() - mean).array() / std.array()).matrix().transpose();
  return out;
}

Eigen::MatrixXd normalizedMusic(const ingest::Window& w, const FeatureStats& s) {
  return normalizeRows(w.music, s.music_mean, s.music_std, w.pad_front, w.h + w.valid_future);
}

Eigen::MatrixXd normalizedDance(const ingest::Window& w, const FeatureStats& s) {
  Eigen::VectorXd mean(kDanceDim), sd(kDanceDim);
  for (int k = 0; k < kNumJoints; ++k) {
    mean.segment<3>(3 * k) = s.dance_mean;
    sd.segment<3>(3 * k) = s.dance_std;
  }
  return normalizeRows(w.dance, mean, sd, w.pad_front, w.h + w.valid_future);
}

Eigen::MatrixXd normalizedCameraHistory(const ingest::Window& w, const FeatureStats& s) {
  return normalizeRows(w.camera, s.camera_mean, s.camera_std, w.pad_front, w.h);
}

MusicDanceContext::MusicDanceContext(nn::ParameterSet& ps, const std::string& name, int embed_dim,
                                     std::mt19937_64& rng)
    : music_(ps, name + ".music_encoder", kMusicDim, embed_dim, rng),
      pose_(ps, name + ".pose_encoder", kDanceDim, embed_dim, rng) {}

nn::Var MusicDanceContext::operator()(const nn::Context& ctx, const ingest::Window& w,
                                      const FeatureStats& s) const {
  const nn::Var m = music_(ctx, nn::constant(normalizedMusic(w, s)));
  const nn::Var p = pose_(ctx, nn::constant(normalizedDance(w, s)));
  return nn::concatCols({m, p});
}

}  // namespace dancecam::model
