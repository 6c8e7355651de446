#pragma once

#include <cstddef>
#include <vector>

#include "dancecam/core/types.hpp"

namespace dancecam {

inline constexpr int kMaxInterval = 60;

// Componentwise c1 + rho * (c2 - c1). Rotations are blended as plain scalars.
// rho == 0 and rho == 1 return the endpoint poses exactly.
CameraPosed interpolatePose(const CameraPosed& c1, const CameraPosed& c2, double rho);

// Forces the first and last frames to be keyframes.
KeyframeTags canonicalize(KeyframeTags tags);

// Inserts keyframes at offsets max_len, 2*max_len, ... from the left keyframe
// of every gap longer than max_len.
KeyframeTags splitLongIntervals(const KeyframeTags& tags, int max_len = kMaxInterval);

// Largest distance between adjacent keyframes; 0 with fewer than two.
int maxGap(const KeyframeTags& tags);

bool isCanonical(const KeyframeTags& tags, int max_len = kMaxInterval);

struct Interval {
  int t1;  // first frame (a keyframe)
  int t2;  // next keyframe, or T for the final interval; covers [t1, t2 - 1]

  int length() const { return t2 - t1; }
  bool operator==(const Interval&) const = default;
};

// Adjacent keyframe pairs covering [first keyframe, T - 1]; the last keyframe
// opens an interval that ends at T.
std::vector<Interval> keyframeIntervals(const KeyframeTags& tags);

}  // namespace dancecam
