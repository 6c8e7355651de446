#include "dancecam/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace dancecam::metrics {

namespace {

void checkAligned(Eigen::Index a, Eigen::Index b) {
  if (a != b) throw ShapeError("metrics: camera and dance lengths differ");
  if (a == 0) throw RangeError("metrics: empty sequence");
}

void checkSet(const std::vector<FeatureVec>& xs, std::size_t min_size, const char* what) {
  if (xs.size() < min_size) throw RangeError(std::string(what) + ": not enough feature vectors");
  for (const auto& x : xs) {
    if (x.kind != xs.front().kind) throw ShapeError(std::string(what) + ": feature kinds differ");
    if (x.values.size() != xs.front().values.size()) throw ShapeError(std::string(what) + ": feature sizes differ");
    if (!x.values.allFinite()) throw RangeError(std::string(what) + ": non-finite features");
  }
}

Eigen::MatrixXd symmetricSqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

FeatureVec kineticFeatures(const CameraTrack& camera) {
  const Eigen::Index T = camera.rows();
  if (T < 3) throw RangeError("kinetic_features: need at least 3 frames");
  Eigen::MatrixXd ch(T, 11);
  for (Eigen::Index t = 0; t < T; ++t) {
    ch.row(t).head(8) = camera.row(t);
    ch.row(t).tail(3) = polarToEye(poseAt(camera, t)).eye.transpose();
  }
  const Eigen::MatrixXd vel = ch.bottomRows(T - 1) - ch.topRows(T - 1);
  const Eigen::MatrixXd acc = vel.bottomRows(T - 2) - vel.topRows(T - 2);
  FeatureVec f{FeatureKind::Kinetic, Eigen::VectorXd(kKineticDim)};
  f.values.head(11) = vel.array().square().colwise().mean().transpose();
  f.values.tail(11) = acc.array().square().colwise().mean().transpose();
  return f;
}

Eigen::VectorXd poseDeltas(const CameraTrack& camera) {
  const Eigen::Index T = camera.rows();
  if (T < 2) return {};
  return (camera.bottomRows(T - 1) - camera.topRows(T - 1)).rowwise().norm();
}

double thetaCut(const std::vector<CameraTrack>& tracks, double percentile) {
  if (!(percentile >= 0.0 && percentile <= 100.0)) throw RangeError("theta_cut: percentile outside [0, 100]");
  std::vector<double> d;
  for (const auto& c : tracks) {
    const Eigen::VectorXd v = poseDeltas(c);
    d.insert(d.end(), v.data(), v.data() + v.size());
  }
  if (d.empty()) throw RangeError("theta_cut: no frame deltas");
  std::sort(d.begin(), d.end());
  const double pos = percentile / 100.0 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
}

FeatureVec shotFeatures(const CameraTrack& camera, const DanceTrack& dance, double theta_cut, int fps,
                        double aspect) {
  checkAligned(camera.rows(), dance.rows());
  if (fps <= 0) throw RangeError("shot_features: fps must be positive");
  const Eigen::Index T = camera.rows();
  FeatureVec f{FeatureKind::Shot, Eigen::VectorXd::Zero(kShotDim)};
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto vis = visibleJoints(poseAt(camera, t), danceFrame(dance, t), aspect);
    for (int j = 0; j < kNumJoints; ++j) f.values(j) += vis[j];
  }
  f.values.head(kNumJoints) /= static_cast<double>(T);
  const Eigen::VectorXd d = poseDeltas(camera);
  const double cuts = static_cast<double>((d.array() > theta_cut).count());
  const double seconds = static_cast<double>(T) / fps;
  f.values(kNumJoints) = cuts / seconds;
  f.values(kNumJoints + 1) = seconds / (cuts + 1.0);
  f.values(kNumJoints + 2) = camera.col(7).mean();
  return f;
}

Gaussian fitGaussian(const std::vector<FeatureVec>& xs) {
  checkSet(xs, 2, "fid");
  const Eigen::Index n = static_cast<Eigen::Index>(xs.size()), d = xs.front().values.size();
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) X.row(i) = xs[i].values.transpose();
  Gaussian g;
  g.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd C = X.rowwise() - g.mean.transpose();
  g.cov = C.transpose() * C / static_cast<double>(n - 1);
  return g;
}

double frechetDistance(const Gaussian& a, const Gaussian& b, double reg) {
  const Eigen::Index d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d || b.cov.cols() != d)
    throw ShapeError("frechet_distance: dimension mismatch");
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd sa = 0.5 * (a.cov + a.cov.transpose()) + reg * I;
  const Eigen::MatrixXd sb = 0.5 * (b.cov + b.cov.transpose()) + reg * I;
  // tr (Sa Sb)^(1/2) = tr (Sa^(1/2) Sb Sa^(1/2))^(1/2), the latter symmetric.
  const Eigen::MatrixXd ra = symmetricSqrt(sa);
  const Eigen::MatrixXd m = ra * sb * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double v = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  return std::max(v, 0.0);
}

double fid(const std::vector<FeatureVec>& a, const std::vector<FeatureVec>& b) {
  checkSet(a, 2, "fid");
  checkSet(b, 2, "fid");
  if (a.front().kind != b.front().kind) throw ShapeError("fid: feature kinds differ");
  const Gaussian ga = fitGaussian(a), gb = fitGaussian(b);
  // Symmetrize so that fid(a, b) == fid(b, a) bit for bit.
  return 0.5 * (frechetDistance(ga, gb) + frechetDistance(gb, ga));
}

double diversityDist(const std::vector<FeatureVec>& xs) {
  checkSet(xs, 2, "diversity_dist");
  double acc = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = i + 1; j < xs.size(); ++j, ++pairs) acc += (xs[i].values - xs[j].values).norm();
  return acc / static_cast<double>(pairs);
}

double dmr(const CameraTrack& camera, const DanceTrack& dance, double aspect) {
  checkAligned(camera.rows(), dance.rows());
  long missed = 0;
  for (Eigen::Index t = 0; t < camera.rows(); ++t) {
    const auto vis = visibleJoints(poseAt(camera, t), danceFrame(dance, t), aspect);
    missed += std::none_of(vis.begin(), vis.end(), [](std::uint8_t v) { return v != 0; });
  }
  return static_cast<double>(missed) / static_cast<double>(camera.rows());
}

double lcd(const CameraTrack& pred, const CameraTrack& gt, const DanceTrack& dance, double aspect) {
  checkAligned(pred.rows(), dance.rows());
  checkAligned(gt.rows(), dance.rows());
  long diff = 0;
  for (Eigen::Index t = 0; t < pred.rows(); ++t) {
    const JointPositions<double> joints = danceFrame(dance, t);
    const auto a = visibleJoints(poseAt(pred, t), joints, aspect);
    const auto b = visibleJoints(poseAt(gt, t), joints, aspect);
    for (int j = 0; j < kNumJoints; ++j) diff += a[j] != b[j];
  }
  return static_cast<double>(diff) / (static_cast<double>(pred.rows()) * kNumJoints);
}

}  // namespace dancecam::metrics
