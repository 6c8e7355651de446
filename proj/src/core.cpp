#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include "dancecam/core/geometry.hpp"
#include "dancecam/core/keyframes.hpp"

namespace dancecam {

JointMask jointVisibility(const CameraPosed& pose, const JointPositions<double>& joints,
                          double aspect, double sharpness) {
  const CameraEye<double> cam = polarToEye(pose);
  JointMask m;
  m.soft.resize(joints.rows());
  m.hard.resize(joints.rows());
  for (Eigen::Index j = 0; j < joints.rows(); ++j) {
    const Vec3<double> p = joints.row(j).transpose();
    if ((p - cam.eye).squaredNorm() < kCoincidentEps * kCoincidentEps) {
      m.soft(j) = 0.0;
      m.hard[j] = 0;
      continue;
    }
    const double margin = visibilityMargin(cam, p, aspect);
    m.soft(j) = 1.0 / (1.0 + std::exp(-sharpness * margin));
    m.hard[j] = margin >= 0.0 ? 1 : 0;
  }
  return m;
}

std::vector<std::uint8_t> visibleJoints(const CameraPosed& pose,
                                        const JointPositions<double>& joints, double aspect) {
  const CameraEye<double> cam = polarToEye(pose);
  std::vector<std::uint8_t> out(joints.rows());
  for (Eigen::Index j = 0; j < joints.rows(); ++j) {
    const Vec3<double> p = joints.row(j).transpose();
    if ((p - cam.eye).squaredNorm() < kCoincidentEps * kCoincidentEps) {
      out[j] = 0;
      continue;
    }
    out[j] = visibilityMargin(cam, p, aspect) >= 0.0 ? 1 : 0;
  }
  return out;
}

void softVisibilityJacobian(const CameraPosed& pose, const JointPositions<double>& joints,
                            double aspect, double sharpness, Eigen::VectorXd& mask,
                            Eigen::MatrixXd& jacobian) {
  using Deriv = Eigen::Matrix<double, kPoseDim, 1>;
  using AD = Eigen::AutoDiffScalar<Deriv>;
  const PoseVector<double> v = pose.toVector();
  PoseVector<AD> av;
  for (int i = 0; i < kPoseDim; ++i) av(i) = AD(v(i), kPoseDim, i);
  const CameraEye<AD> cam = polarToEyeUnchecked(CameraPose<AD>::fromVector(av));

  mask.resize(joints.rows());
  jacobian.setZero(joints.rows(), kPoseDim);
  for (Eigen::Index j = 0; j < joints.rows(); ++j) {
    Vec3<AD> p;
    for (int c = 0; c < 3; ++c) p(c) = AD(joints(j, c), Deriv::Zero());
    const AD s = softVisibility(cam, p, aspect, sharpness);
    mask(j) = s.value();
    if (s.derivatives().size() == kPoseDim) jacobian.row(j) = s.derivatives().transpose();
  }
}

CameraPosed interpolatePose(const CameraPosed& c1, const CameraPosed& c2, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw RangeError("interpolate_pose: rho " + std::to_string(rho) + " outside [0, 1]");
  if (rho == 0.0) return c1;
  if (rho == 1.0) return c2;
  const PoseVector<double> a = c1.toVector();
  const PoseVector<double> b = c2.toVector();
  return CameraPosed::fromVector(a + rho * (b - a));
}

KeyframeTags canonicalize(KeyframeTags tags) {
  if (tags.size() == 0) return tags;
  for (auto& t : tags.tags) t = t ? 1 : 0;
  tags.tags.front() = 1;
  tags.tags.back() = 1;
  return tags;
}

KeyframeTags splitLongIntervals(const KeyframeTags& tags, int max_len) {
  if (max_len <= 0) throw RangeError("split_long_intervals: max_len must be positive");
  KeyframeTags out = tags;
  const std::vector<int> keys = tags.keyframes();
  for (std::size_t i = 1; i < keys.size(); ++i) {
    for (int f = keys[i - 1] + max_len; f < keys[i]; f += max_len) out.tags[f] = 1;
  }
  return out;
}

int maxGap(const KeyframeTags& tags) {
  const std::vector<int> keys = tags.keyframes();
  int g = 0;
  for (std::size_t i = 1; i < keys.size(); ++i) g = std::max(g, keys[i] - keys[i - 1]);
  return g;
}

bool isCanonical(const KeyframeTags& tags, int max_len) {
  if (tags.size() == 0) return false;
  if (!tags.isKey(0) || !tags.isKey(tags.size() - 1)) return false;
  return maxGap(tags) <= max_len;
}

std::vector<Interval> keyframeIntervals(const KeyframeTags& tags) {
  const std::vector<int> keys = tags.keyframes();
  std::vector<Interval> out;
  out.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const int t2 = i + 1 < keys.size() ? keys[i + 1] : static_cast<int>(tags.size());
    out.push_back({keys[i], t2});
  }
  return out;
}

}  // namespace dancecam
