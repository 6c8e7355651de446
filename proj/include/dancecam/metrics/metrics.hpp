#pragma once

#include <vector>

#include <Eigen/Core>

#include "dancecam/core/geometry.hpp"

namespace dancecam::metrics {

enum class FeatureKind { Kinetic, Shot };

inline constexpr int kKineticDim = 22;
inline constexpr int kShotDim = kNumJoints + 3;
inline constexpr double kCutPercentile = 99.5;
inline constexpr double kCovarianceRegularizer = 1e-6;

struct FeatureVec {
  FeatureKind kind;
  Eigen::VectorXd values;
};

// Mean squared velocity (entries 0..10) and acceleration (11..21) of the 8
// pose channels followed by the eye position x, y, z.
FeatureVec kineticFeatures(const CameraTrack& camera);

// Euclidean norm of each frame-to-frame pose difference (T - 1 values).
Eigen::VectorXd poseDeltas(const CameraTrack& camera);

// Percentile (linear interpolation between order statistics) of all frame
// deltas of the given tracks.
double thetaCut(const std::vector<CameraTrack>& tracks, double percentile = kCutPercentile);

// Per-joint visibility rate, then cuts per second, mean shot length in
// seconds and mean fov. A cut is a frame delta above theta_cut.
FeatureVec shotFeatures(const CameraTrack& camera, const DanceTrack& dance, double theta_cut, int fps = kFps,
                        double aspect = kDefaultAspect);

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Sample mean and unbiased covariance.
Gaussian fitGaussian(const std::vector<FeatureVec>& xs);

// Frechet distance of two Gaussians; both covariances get the regularizer
// added to their diagonal.
double frechetDistance(const Gaussian& a, const Gaussian& b, double reg = kCovarianceRegularizer);
double fid(const std::vector<FeatureVec>& a, const std::vector<FeatureVec>& b);

// Mean pairwise Euclidean distance.
double diversityDist(const std::vector<FeatureVec>& xs);

// Fraction of frames with no visible joint.
double dmr(const CameraTrack& camera, const DanceTrack& dance, double aspect = kDefaultAspect);

// Mean fraction of joints whose visibility differs between the two tracks.
double lcd(const CameraTrack& pred, const CameraTrack& gt, const DanceTrack& dance, double aspect = kDefaultAspect);

}  // namespace dancecam::metrics
