#include <doctest.h>

#include <random>

#include "dancecam/core/geometry.hpp"
#include "dancecam/core/keyframes.hpp"
#include "fixtures.hpp"

using namespace dancecam;
using fixtures::pose;

namespace {

KeyframeTags tagsAt(std::size_t n, std::vector<int> frames) { return KeyframeTags::fromKeyframes(n, frames); }

JointPositions<double> oneJoint(const Eigen::Vector3d& p) {
  JointPositions<double> j(1, 3);
  j.row(0) = p.transpose();
  return j;
}

}  // namespace

TEST_CASE("polar_to_eye zero rotation") {
  const auto e = polarToEye(pose(0, 0, 0, 0, 0, 0, 5, 40));
  CHECK(e.eye.isApprox(Eigen::Vector3d(0, 0, -5)));
  CHECK(e.view_dir.isApprox(Eigen::Vector3d(0, 0, 1)));
  CHECK(e.up.isApprox(Eigen::Vector3d(0, 1, 0)));
}

TEST_CASE("polar_to_eye quarter yaw") {
  const auto e = polarToEye(pose(0, 0, 0, 0, kPi / 2, 0, 5, 40));
  CHECK((e.eye - Eigen::Vector3d(-5, 0, 0)).norm() < 1e-12);
  CHECK((e.view_dir - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("polar_to_eye zero distance and invalid poses") {
  const CameraPosed p = pose(1, 2, 3, 0.3, -0.7, 0.1, 0, 40);
  const auto e = polarToEye(p);
  CHECK(e.eye == p.rp);
  CHECK((e.view_dir - cameraRotation<double>(p.rot).col(2)).norm() < 1e-15);
  CHECK_THROWS_AS(polarToEye(pose(0, 0, 0, 0, 0, 0, -1, 40)), InvalidPoseError);
  CHECK_THROWS_AS(polarToEye(pose(0, 0, 0, 0, 0, 0, 1, 180)), InvalidPoseError);
  CHECK_THROWS_AS(polarToEye(pose(0, 0, std::nan(""), 0, 0, 0, 1, 40)), InvalidPoseError);
}

TEST_CASE("eye frame is orthonormal and the reference point is on the optical axis") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const CameraPosed p = fixtures::randomPose(rng);
    const auto e = polarToEye(p);
    CHECK(std::abs(e.view_dir.norm() - 1) < 1e-6);
    CHECK(std::abs(e.up.norm() - 1) < 1e-6);
    CHECK(std::abs(e.view_dir.dot(e.up)) < 1e-6);
    const auto a = viewAngles(e, p.rp);
    CHECK(std::abs(a.horizontal) < 1e-6);
    CHECK(std::abs(a.vertical) < 1e-6);
  }
}

TEST_CASE("joint visibility examples") {
  const CameraPosed p = pose(0, 0, 0, 0, 0, 0, 5, 60);
  const auto e = polarToEye(p);
  CHECK(visibleJoints(p, oneJoint(p.rp))[0] == 1);
  CHECK(visibleJoints(p, oneJoint(e.eye - e.view_dir))[0] == 0);
  CHECK(visibleJoints(p, oneJoint(e.eye))[0] == 0);
  // Vertical angle theta from the eye at depth 5.
  auto at = [&](double deg) { return oneJoint(e.eye + Eigen::Vector3d(0, 5 * std::tan(deg * kPi / 180), 5)); };
  CHECK(visibleJoints(p, at(29.9))[0] == 1);
  CHECK(visibleJoints(p, at(30.1))[0] == 0);
  CHECK(visibleJoints(p, at(-29.9))[0] == 1);
  CHECK(visibleJoints(p, at(-30.1))[0] == 0);
  // Horizontal half-angle atan(16/9 tan 30deg) ~ 45.75 deg.
  const double hh = std::atan(16.0 / 9.0 * std::tan(kPi / 6)) * 180 / kPi;
  auto side = [&](double deg) { return oneJoint(e.eye + Eigen::Vector3d(5 * std::tan(deg * kPi / 180), 0, 5)); };
  CHECK(visibleJoints(p, side(hh - 0.1))[0] == 1);
  CHECK(visibleJoints(p, side(hh + 0.1))[0] == 0);
}

TEST_CASE("soft and hard visibility agree away from the frustum boundary") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-6, 6);
  for (int i = 0; i < 50; ++i) {
    const CameraPosed p = fixtures::randomPose(rng);
    JointPositions<double> j(40, 3);
    for (int k = 0; k < 40; ++k) j.row(k) << u(rng), u(rng), u(rng);
    const JointMask m = jointVisibility(p, j);
    const auto e = polarToEye(p);
    for (int k = 0; k < 40; ++k) {
      const double margin = visibilityMargin(e, Eigen::Vector3d(j.row(k).transpose()), kDefaultAspect);
      CHECK(m.soft(k) >= 0.0);
      CHECK(m.soft(k) <= 1.0);
      CHECK(m.hard[k] == (margin >= 0 ? 1 : 0));
      if (std::abs(margin) > 3.0 / kDefaultSharpness) CHECK((m.soft(k) > 0.5) == (m.hard[k] == 1));
    }
  }
}

TEST_CASE("soft visibility jacobian matches central differences") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const CameraPosed p = fixtures::randomPose(rng);
    const auto e = polarToEye(p);
    JointPositions<double> j(5, 3);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int k = 0; k < 5; ++k) j.row(k) = (p.rp + Eigen::Vector3d(u(rng), u(rng), u(rng))).transpose();
    Eigen::VectorXd mask;
    Eigen::MatrixXd jac;
    softVisibilityJacobian(p, j, kDefaultAspect, kDefaultSharpness, mask, jac);
    REQUIRE(jac.rows() == 5);
    REQUIRE(jac.cols() == kPoseDim);
    CHECK((mask - jointVisibility(p, j).soft).norm() < 1e-12);
    const double h = 1e-6;
    for (int c = 0; c < kPoseDim; ++c) {
      PoseVector<double> v = p.toVector();
      v(c) += h;
      const Eigen::VectorXd up = jointVisibility(CameraPosed::fromVector(v), j).soft;
      v(c) -= 2 * h;
      const Eigen::VectorXd dn = jointVisibility(CameraPosed::fromVector(v), j).soft;
      const Eigen::VectorXd fd = (up - dn) / (2 * h);
      CHECK((fd - jac.col(c)).norm() <= 1e-5 * std::max(1.0, fd.norm()));
    }
    (void)e;
  }
}

TEST_CASE("interpolate_pose") {
  const CameraPosed a = pose(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 2, 30);
  const CameraPosed b = pose(-1.3, 2.7, 0.9, -0.4, 2.5, 0.1, 6, 50);
  CHECK(interpolatePose(a, b, 0.0) == a);
  CHECK(interpolatePose(a, b, 1.0) == b);
  CHECK(interpolatePose(a, b, 0.25).dist == doctest::Approx(3.0));
  CHECK_THROWS_AS(interpolatePose(a, b, -0.01), RangeError);
  CHECK_THROWS_AS(interpolatePose(a, b, 1.01), RangeError);
  // Affine: f(ra) + f(rb) == f(ra + rb) + c1.
  const double ra = 0.2, rb = 0.45;
  const PoseVector<double> lhs = interpolatePose(a, b, ra).toVector() + interpolatePose(a, b, rb).toVector();
  const PoseVector<double> rhs = interpolatePose(a, b, ra + rb).toVector() + a.toVector();
  CHECK((lhs - rhs).norm() < 1e-12);
}

TEST_CASE("canonicalize and split_long_intervals") {
  CHECK(splitLongIntervals(tagsAt(151, {0, 150})).keyframes() == std::vector<int>{0, 60, 120, 150});
  CHECK(splitLongIntervals(tagsAt(61, {0, 60})).keyframes() == std::vector<int>{0, 60});
  CHECK(splitLongIntervals(tagsAt(62, {0, 61})).keyframes() == std::vector<int>{0, 60, 61});
  const KeyframeTags c = canonicalize(tagsAt(10, {4}));
  CHECK(c.keyframes() == std::vector<int>{0, 4, 9});
  CHECK(isCanonical(c));
  CHECK_FALSE(isCanonical(tagsAt(10, {0, 4})));
  CHECK(maxGap(tagsAt(200, {0, 70, 199})) == 129);
  CHECK(maxGap(tagsAt(5, {2})) == 0);
}

TEST_CASE("split is idempotent, keeps keyframes, and bounds every gap") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 700;
    KeyframeTags t(n);
    const double density = std::uniform_real_distribution<double>(0, 0.05)(rng);
    for (auto& v : t.tags) v = std::uniform_real_distribution<double>(0, 1)(rng) < density;
    const KeyframeTags c = canonicalize(t);
    const int max_len = 1 + static_cast<int>(rng() % 80);
    const KeyframeTags s = splitLongIntervals(c, max_len);
    CHECK(maxGap(s) <= max_len);
    CHECK(splitLongIntervals(s, max_len) == s);
    for (std::size_t i = 0; i < n; ++i)
      if (c.isKey(i)) CHECK(s.isKey(i));
  }
}

TEST_CASE("keyframe intervals cover the sequence once") {
  const auto ivs = keyframeIntervals(tagsAt(61, {0, 30, 60}));
  REQUIRE(ivs.size() == 3);
  CHECK(ivs[0] == Interval{0, 30});
  CHECK(ivs[1] == Interval{30, 60});
  CHECK(ivs[2] == Interval{60, 61});
  std::vector<int> covered(61, 0);
  for (const auto& iv : ivs)
    for (int t = iv.t1; t < iv.t2; ++t) ++covered[t];
  for (int c : covered) CHECK(c == 1);
  CHECK_THROWS_AS(KeyframeTags::fromKeyframes(10, {10}), RangeError);
}
