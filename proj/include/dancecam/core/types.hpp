#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dancecam {

inline constexpr int kMusicDim = 35;
inline constexpr int kNumJoints = 60;
inline constexpr int kDanceDim = kNumJoints * 3;
inline constexpr int kPoseDim = 8;
inline constexpr int kFps = 30;

// Errors carry the category in the type so callers (CLI, HTTP layer) can map
// them to exit codes / status codes.
struct InvalidPoseError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using PoseVector = Eigen::Matrix<Scalar, kPoseDim, 1>;

// MMD-style polar camera: reference point, rotation about it (pitch, yaw,
// roll in radians), distance to the reference point and vertical FOV in
// degrees. Channel order everywhere is rp.xyz, rot.xyz, dist, fov.
template <typename Scalar = double>
struct CameraPose {
  Vec3<Scalar> rp = Vec3<Scalar>::Zero();
  Vec3<Scalar> rot = Vec3<Scalar>::Zero();
  Scalar dist = Scalar(0);
  Scalar fov = Scalar(30);

  static CameraPose fromVector(const PoseVector<Scalar>& v) {
    CameraPose p;
    p.rp = v.template segment<3>(0);
    p.rot = v.template segment<3>(3);
    p.dist = v(6);
    p.fov = v(7);
    return p;
  }

  PoseVector<Scalar> toVector() const {
    PoseVector<Scalar> v;
    v << rp, rot, dist, fov;
    return v;
  }

  template <typename Other>
  CameraPose<Other> cast() const {
    return CameraPose<Other>::fromVector(toVector().template cast<Other>());
  }

  bool operator==(const CameraPose& o) const {
    return rp == o.rp && rot == o.rot && dist == o.dist && fov == o.fov;
  }
};

using CameraPosed = CameraPose<double>;

// Cartesian form of a CameraPose.
template <typename Scalar = double>
struct CameraEye {
  Vec3<Scalar> eye;
  Vec3<Scalar> view_dir;
  Vec3<Scalar> up;
  Vec3<Scalar> right;
  Scalar fov;
};

// Dense camera track: one row per frame, kPoseDim channels.
using CameraTrack = Eigen::Matrix<double, Eigen::Dynamic, kPoseDim, Eigen::RowMajor>;

// Joint positions of one frame, one row per joint.
template <typename Scalar = double>
using JointPositions = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

using MusicTrack = Eigen::Matrix<float, Eigen::Dynamic, kMusicDim, Eigen::RowMajor>;
// Dance track: one row per frame holding 60 joints as x0 y0 z0 x1 ...
using DanceTrack = Eigen::Matrix<float, Eigen::Dynamic, kDanceDim, Eigen::RowMajor>;

inline JointPositions<double> danceFrame(const DanceTrack& dance, Eigen::Index t) {
  JointPositions<double> j(kNumJoints, 3);
  for (int k = 0; k < kNumJoints; ++k) {
    for (int c = 0; c < 3; ++c) j(k, c) = static_cast<double>(dance(t, 3 * k + c));
  }
  return j;
}

inline CameraPosed poseAt(const CameraTrack& track, Eigen::Index t) {
  return CameraPosed::fromVector(track.row(t).transpose());
}

inline void setPose(CameraTrack& track, Eigen::Index t, const CameraPosed& p) {
  track.row(t) = p.toVector().transpose();
}

// Per-frame keyframe tags. Stored as loaded; canonicalize() before use.
struct KeyframeTags {
  std::vector<std::uint8_t> tags;
  int fps = kFps;

  KeyframeTags() = default;
  explicit KeyframeTags(std::size_t n, int fps_ = kFps) : tags(n, 0), fps(fps_) {}

  std::size_t size() const { return tags.size(); }
  bool isKey(std::size_t t) const { return tags[t] != 0; }

  std::vector<int> keyframes() const {
    std::vector<int> out;
    for (std::size_t t = 0; t < tags.size(); ++t)
      if (tags[t]) out.push_back(static_cast<int>(t));
    return out;
  }

  static KeyframeTags fromKeyframes(std::size_t n, const std::vector<int>& frames, int fps_ = kFps) {
    KeyframeTags k(n, fps_);
    for (int f : frames) {
      if (f < 0 || static_cast<std::size_t>(f) >= n)
        throw RangeError("keyframe index " + std::to_string(f) + " outside [0, " +
                         std::to_string(n) + ")");
      k.tags[f] = 1;
    }
    return k;
  }

  bool operator==(const KeyframeTags& o) const { return tags == o.tags && fps == o.fps; }
};

struct JointMask {
  Eigen::VectorXd soft;  // in [0, 1]
  std::vector<std::uint8_t> hard;
};

struct SequenceBundle {
  std::string name;
  // Source song identity and start offset (frames) for stitching.
  std::string song;
  int start = 0;
  int fps = kFps;
  MusicTrack music;
  DanceTrack dance;
  std::optional<CameraTrack> camera;
  std::optional<KeyframeTags> tags;

  Eigen::Index length() const { return music.rows(); }
};

}  // namespace dancecam
