#pragma once

#include <vector>

#include <Eigen/Core>

#include "dancecam/core/types.hpp"
#include "dancecam/nn/autograd.hpp"

namespace dancecam::stage23 {

inline constexpr double kFlatDenominator = 1e-9;

struct TweenComputation {
  Eigen::VectorXd delta_tilde;  // raw increments over [t1, t2-1]
  Eigen::VectorXd delta_breve;  // increments minus their minimum
  Eigen::VectorXd rho_breve;    // cumulative sum
  Eigen::VectorXd rho_hat;      // anchored to 0 at t1 and 1 at t2-1
  bool fallback = false;        // flat increments: linear ramp used
};

// 0, 1/(n-1), ..., 1; a single frame gives [1].
Eigen::VectorXd linearRamp(Eigen::Index n);

// Monotone tween values from raw per-frame increments of one interval.
TweenComputation tweenFromIncrements(const Eigen::VectorXd& delta_tilde);

// Differentiable version of tweenFromIncrements (n x 1 in, n x 1 out).
nn::Var tweenFromIncrements(const nn::Var& delta_tilde);

// Frames t1 .. t2-1: c1 + rho (c2 - c1); first row is c1 and last row is c2
// bit-exactly.
CameraTrack reconstructInterval(const CameraPosed& c1, const CameraPosed& c2, const Eigen::VectorXd& rho_hat);

// Differentiable reconstruction; c1, c2 are 1 x 8, rho is n x 1.
nn::Var reconstructInterval(const nn::Var& c1, const nn::Var& c2, const nn::Var& rho_hat);

}  // namespace dancecam::stage23
