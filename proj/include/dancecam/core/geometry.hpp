#pragma once

#include <cmath>

#include <Eigen/Core>

#include "dancecam/core/types.hpp"

namespace dancecam {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDefaultAspect = 16.0 / 9.0;
// Sharpness of the soft visibility mask, per radian of angular margin.
inline constexpr double kDefaultSharpness = 20.0;

template <typename Scalar>
Scalar deg2rad(const Scalar& d) {
  return d * Scalar(kPi / 180.0);
}

// R_y(yaw) * R_x(pitch) * R_z(roll); rot = (pitch, yaw, roll).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> cameraRotation(const Vec3<Scalar>& rot) {
  using std::cos;
  using std::sin;
  const Scalar cx = cos(rot(0)), sx = sin(rot(0));
  const Scalar cy = cos(rot(1)), sy = sin(rot(1));
  const Scalar cz = cos(rot(2)), sz = sin(rot(2));
  const Scalar zero(0), one(1);
  Eigen::Matrix<Scalar, 3, 3> rx, ry, rz;
  rx << one, zero, zero, zero, cx, -sx, zero, sx, cx;
  ry << cy, zero, sy, zero, one, zero, -sy, zero, cy;
  rz << cz, -sz, zero, sz, cz, zero, zero, zero, one;
  return ry * rx * rz;
}

template <typename Scalar>
bool isValidPose(const CameraPose<Scalar>& p) {
  using std::isfinite;
  for (int i = 0; i < kPoseDim; ++i) {
    if (!isfinite(static_cast<double>(p.toVector()(i)))) return false;
  }
  return p.dist >= Scalar(0) && p.fov > Scalar(0) && p.fov < Scalar(180);
}

template <typename Scalar>
void validatePose(const CameraPose<Scalar>& p) {
  if (!isValidPose(p)) throw InvalidPoseError("camera pose is non-finite or out of range");
}

// Without validation; used on the differentiable paths where the scalar may
// be an autodiff type.
template <typename Scalar>
CameraEye<Scalar> polarToEyeUnchecked(const CameraPose<Scalar>& pose) {
  const Eigen::Matrix<Scalar, 3, 3> r = cameraRotation<Scalar>(pose.rot);
  CameraEye<Scalar> e;
  e.view_dir = r.col(2);
  e.up = r.col(1);
  e.right = r.col(0);
  e.eye = pose.rp - pose.dist * e.view_dir;
  e.fov = pose.fov;
  return e;
}

template <typename Scalar>
CameraEye<Scalar> polarToEye(const CameraPose<Scalar>& pose) {
  using std::isfinite;
  for (int i = 0; i < kPoseDim; ++i) {
    if (!isfinite(static_cast<double>(pose.toVector()(i))))
      throw InvalidPoseError("polar_to_eye: non-finite pose component");
  }
  if (pose.dist < Scalar(0) || !(pose.fov > Scalar(0) && pose.fov < Scalar(180)))
    throw InvalidPoseError("polar_to_eye: dist < 0 or fov outside (0, 180)");
  return polarToEyeUnchecked(pose);
}

template <typename Scalar>
struct ViewAngles {
  Scalar horizontal;
  Scalar vertical;
  Scalar distance;
};

template <typename Scalar>
ViewAngles<Scalar> viewAngles(const CameraEye<Scalar>& cam, const Vec3<Scalar>& point) {
  using std::atan2;
  using std::sqrt;
  const Vec3<Scalar> rel = point - cam.eye;
  const Scalar x = rel.dot(cam.right);
  const Scalar y = rel.dot(cam.up);
  const Scalar z = rel.dot(cam.view_dir);
  return {atan2(x, z), atan2(y, z), sqrt(rel.squaredNorm())};
}

// Signed angular margin (radians) of a point against the frustum: positive
// inside. Points behind the camera have |angle| > pi/2 > fov/2, so the depth
// test is implied by the angle test.
template <typename Scalar>
Scalar visibilityMargin(const CameraEye<Scalar>& cam, const Vec3<Scalar>& point, double aspect) {
  using std::abs;
  using std::atan2;
  using std::cos;
  using std::sin;
  const ViewAngles<Scalar> a = viewAngles(cam, point);
  const Scalar half_v = deg2rad(cam.fov) / Scalar(2);
  // atan(aspect * tan(half_v)), written with atan2 for autodiff scalars.
  const Scalar half_h = atan2(Scalar(aspect) * sin(half_v), cos(half_v));
  const Scalar mv = half_v - abs(a.vertical);
  const Scalar mh = half_h - abs(a.horizontal);
  return mv < mh ? mv : mh;
}

inline constexpr double kCoincidentEps = 1e-12;

template <typename Scalar>
Scalar softVisibility(const CameraEye<Scalar>& cam, const Vec3<Scalar>& point, double aspect,
                      double sharpness) {
  using std::exp;
  if ((point - cam.eye).squaredNorm() < Scalar(kCoincidentEps * kCoincidentEps)) return Scalar(0);
  const Scalar m = visibilityMargin(cam, point, aspect);
  return Scalar(1) / (Scalar(1) + exp(-Scalar(sharpness) * m));
}

JointMask jointVisibility(const CameraPosed& pose, const JointPositions<double>& joints,
                          double aspect = kDefaultAspect, double sharpness = kDefaultSharpness);

// Hard mask only; cheaper path used by the metrics.
std::vector<std::uint8_t> visibleJoints(const CameraPosed& pose,
                                        const JointPositions<double>& joints,
                                        double aspect = kDefaultAspect);

// Soft visibility of every joint and its Jacobian with respect to the 8 pose
// channels (rows: joints, cols: channels).
void softVisibilityJacobian(const CameraPosed& pose, const JointPositions<double>& joints,
                            double aspect, double sharpness, Eigen::VectorXd& mask,
                            Eigen::MatrixXd& jacobian);

}  // namespace dancecam
